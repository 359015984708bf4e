#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnivox/error.hpp"
#include "omnivox/media.hpp"
#include "omnivox/omt.hpp"
#include "omnivox/random.hpp"
#include "omnivox/rope.hpp"
#include "omnivox/tensor.hpp"

namespace omnivox {

struct EncoderConfig {
  std::size_t patch_dim = 16;  // C * p * p
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 1;
  std::size_t d_out = 16;
  std::size_t mlp_ratio = 4;
  double ln_eps = 1e-5;

  std::size_t head_dim() const { return dim / heads; }
  std::size_t hidden() const { return dim * mlp_ratio; }

  void validate() const {
    if (patch_dim == 0 || dim == 0 || d_out == 0 || heads == 0 || mlp_ratio == 0) {
      throw ConfigError("encoder extents must be positive");
    }
    if (dim % heads != 0) throw ConfigError("encoder dim must be divisible by heads");
    if (head_dim() % 2 != 0) throw ConfigError("encoder head_dim must be even for rotary encoding");
    if (!(ln_eps > 0.0)) throw ConfigError("layer-norm epsilon must be positive");
  }

  void check_rope(const RopeConfig& rope) const {
    rope.validate();
    if (rope.head_dim != head_dim()) {
      throw ConfigError("rope head_dim " + std::to_string(rope.head_dim) + " != encoder head_dim " +
                        std::to_string(head_dim()));
    }
  }
};

enum class ParamGroup { Encoder, Projector, Backbone };

inline std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Projector: return "projector";
    case ParamGroup::Backbone: return "backbone";
  }
  return "?";
}

inline ParamGroup parse_group(std::string_view s) {
  if (s == "encoder") return ParamGroup::Encoder;
  if (s == "projector") return ParamGroup::Projector;
  if (s == "backbone") return ParamGroup::Backbone;
  throw ConfigError("unknown parameter group '" + std::string(s) + "'");
}

struct GroupSet {
  bool encoder = false;
  bool projector = false;
  bool backbone = false;

  static GroupSet all() { return {true, true, true}; }
  static GroupSet none() { return {}; }

  bool contains(ParamGroup g) const {
    switch (g) {
      case ParamGroup::Encoder: return encoder;
      case ParamGroup::Projector: return projector;
      case ParamGroup::Backbone: return backbone;
    }
    return false;
  }
  friend bool operator==(const GroupSet&, const GroupSet&) = default;
};

struct LayerParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;
  Tensor ln2_g, ln2_b;
  Tensor w1, w2;
};

// All trainable state. "backbone" is a D_out x D_out map applied after the
// projector; it plays the role of the language-side model in staged training.
struct EncoderParams {
  EncoderConfig config;
  Tensor patch_w, patch_b;
  std::vector<LayerParams> layers;
  Tensor final_g, final_b;
  Tensor proj_w, proj_b;
  Tensor head;

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  static EncoderParams zeros(const EncoderConfig& cfg) {
    cfg.validate();
    const std::size_t D = cfg.dim, Dp = cfg.patch_dim, Do = cfg.d_out, Hd = cfg.hidden();
    EncoderParams p;
    p.config = cfg;
    p.patch_w = Tensor({Dp, D});
    p.patch_b = Tensor({D});
    p.layers.resize(cfg.layers);
    for (auto& l : p.layers) {
      l.ln1_g = Tensor({D});
      l.ln1_b = Tensor({D});
      l.wq = Tensor({D, D});
      l.wk = Tensor({D, D});
      l.wv = Tensor({D, D});
      l.wo = Tensor({D, D});
      l.ln2_g = Tensor({D});
      l.ln2_b = Tensor({D});
      l.w1 = Tensor({D, Hd});
      l.w2 = Tensor({Hd, D});
    }
    p.final_g = Tensor({D});
    p.final_b = Tensor({D});
    p.proj_w = Tensor({D, Do});
    p.proj_b = Tensor({Do});
    p.head = Tensor({Do, Do});
    return p;
  }

  // Scaled-normal weights, unit layer-norm gains, identity-plus-noise head.
  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed) {
    EncoderParams p = zeros(cfg);
    Rng rng(mix_seed(seed, 0x5eed));
    auto fill = [&rng](Tensor& t, double stddev) {
      for (auto& v : t.data()) v = stddev * rng.normal();
    };
    auto ones = [](Tensor& t) {
      for (auto& v : t.data()) v = 1.0;
    };
    const double D = static_cast<double>(cfg.dim);
    fill(p.patch_w, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim)));
    fill(p.patch_b, 0.02);
    for (auto& l : p.layers) {
      ones(l.ln1_g);
      ones(l.ln2_g);
      fill(l.wq, 1.0 / std::sqrt(D));
      fill(l.wk, 1.0 / std::sqrt(D));
      fill(l.wv, 1.0 / std::sqrt(D));
      fill(l.wo, 0.5 / std::sqrt(D));
      fill(l.w1, 1.0 / std::sqrt(D));
      fill(l.w2, 0.5 / std::sqrt(static_cast<double>(cfg.hidden())));
    }
    ones(p.final_g);
    fill(p.proj_w, 1.0 / std::sqrt(D));
    fill(p.head, 0.05);
    for (std::size_t i = 0; i < cfg.d_out; ++i) p.head(i, i) += 1.0;
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, ParamGroup, const Tensor& t) { n += t.size(); });
    return n;
  }

 private:
  template <class Self, class F>
  static void visit(Self& s, F& f) {
    f(std::string("patch_embed.weight"), ParamGroup::Encoder, s.patch_w);
    f(std::string("patch_embed.bias"), ParamGroup::Encoder, s.patch_b);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      auto& l = s.layers[i];
      const std::string pre = "layer" + std::to_string(i) + ".";
      f(pre + "ln1.gain", ParamGroup::Encoder, l.ln1_g);
      f(pre + "ln1.shift", ParamGroup::Encoder, l.ln1_b);
      f(pre + "attn.wq", ParamGroup::Encoder, l.wq);
      f(pre + "attn.wk", ParamGroup::Encoder, l.wk);
      f(pre + "attn.wv", ParamGroup::Encoder, l.wv);
      f(pre + "attn.wo", ParamGroup::Encoder, l.wo);
      f(pre + "ln2.gain", ParamGroup::Encoder, l.ln2_g);
      f(pre + "ln2.shift", ParamGroup::Encoder, l.ln2_b);
      f(pre + "mlp.w1", ParamGroup::Encoder, l.w1);
      f(pre + "mlp.w2", ParamGroup::Encoder, l.w2);
    }
    f(std::string("final_ln.gain"), ParamGroup::Encoder, s.final_g);
    f(std::string("final_ln.shift"), ParamGroup::Encoder, s.final_b);
    f(std::string("projector.weight"), ParamGroup::Projector, s.proj_w);
    f(std::string("projector.bias"), ParamGroup::Projector, s.proj_b);
    f(std::string("backbone.head"), ParamGroup::Backbone, s.head);
  }
};

inline std::vector<Tensor*> tensors_of(EncoderParams& p) {
  std::vector<Tensor*> out;
  p.for_each([&out](const std::string&, ParamGroup, Tensor& t) { out.push_back(&t); });
  return out;
}

inline std::vector<const Tensor*> tensors_of(const EncoderParams& p) {
  std::vector<const Tensor*> out;
  p.for_each([&out](const std::string&, ParamGroup, const Tensor& t) { out.push_back(&t); });
  return out;
}

struct ForwardStats {
  std::size_t live_tokens = 0;
  std::size_t attention_maps = 0;  // layers * heads evaluated
  std::size_t score_entries = 0;   // q.k products computed across all maps
};

namespace detail {

inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluC = 0.044715;

inline double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluK * (u + kGeluC * u * u * u))); }

inline double gelu_grad(double u) {
  const double th = std::tanh(kGeluK * (u + kGeluC * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluK * (1.0 + 3.0 * kGeluC * u * u);
}

struct LnCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

inline Tensor layer_norm(const Tensor& x, const Tensor& g, const Tensor& b, double eps, LnCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y({n, d});
  if (cache) {
    cache->xhat = Tensor({n, d});
    cache->inv_std.assign(n, 0.0);
  }
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xr[c] - mean) * inv;
      yr[c] = g[c] * xh + b[c];
      if (cache) cache->xhat(r, c) = xh;
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

// Returns d(input); accumulates into dg, db.
inline Tensor layer_norm_backward(const Tensor& dy, const Tensor& g, const LnCache& cache, Tensor& dg, Tensor& db) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Tensor dx({n, d});
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto dyr = dy.row(r);
    auto xh = cache.xhat.row(r);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dg[c] += dyr[c] * xh[c];
      db[c] += dyr[c];
      dxhat[c] = dyr[c] * g[c];
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * xh[c];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    auto dxr = dx.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      dxr[c] = cache.inv_std[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
    }
  }
  return dx;
}

inline Tensor columns(const Tensor& x, std::size_t start, std::size_t count) {
  Tensor out({x.rows(), count});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(start),
              src.begin() + static_cast<std::ptrdiff_t>(start + count), out.row(r).begin());
  }
  return out;
}

inline void put_columns(Tensor& dst, const Tensor& src, std::size_t start) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    auto s = src.row(r);
    std::copy(s.begin(), s.end(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(start));
  }
}

inline void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// One attention head over pre-rotated q/k. Row-at-a-time so the N x N map
// is materialized only when the caller wants it for the backward pass.
inline Tensor attention_head(const Tensor& qr, const Tensor& kr, const Tensor& v, Tensor* attn,
                             ForwardStats* stats) {
  const std::size_t n = qr.rows(), hd = v.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(qr.cols()));
  Tensor out({n, hd});
  if (attn) *attn = Tensor({n, n});
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto qi = qr.row(i);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = dot(qi, kr.row(j)) * inv;
      mx = std::max(mx, s[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = std::exp(s[j] - mx);
      sum += s[j];
    }
    auto oi = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = s[j] / sum;
      if (attn) (*attn)(i, j) = a;
      auto vj = v.row(j);
      for (std::size_t c = 0; c < hd; ++c) oi[c] += a * vj[c];
    }
  }
  if (stats) {
    stats->score_entries += n * n;
    stats->attention_maps += 1;
  }
  return out;
}

struct LayerCache {
  Tensor x_in;
  LnCache ln1;
  Tensor h;
  std::vector<Tensor> qr, kr, v, attn;  // per head
  Tensor o;
  LnCache ln2;
  Tensor h2, u, gu;
};

struct ForwardCache {
  Tensor tokens;
  std::vector<LayerCache> layers;
  LnCache final_ln;
  Tensor pooled;  // 1 x D
  Tensor proj;    // 1 x D_out
  std::size_t n = 0;
};

// Core forward over a compacted (all-live) grid. Never inspects modality.
inline Tensor forward_live(const EncoderParams& P, const TokenGrid& live, const RopeConfig& rope,
                           const AxisFrequencies& freqs, ForwardCache* cache, ForwardStats* stats) {
  const auto& cfg = P.config;
  const std::size_t n = live.size(), D = cfg.dim, hd = cfg.head_dim();
  if (live.patch_dim() != cfg.patch_dim) {
    throw DimensionError("token length " + std::to_string(live.patch_dim()) + " != encoder patch_dim " +
                         std::to_string(cfg.patch_dim));
  }
  const std::span<const Position> pos(live.positions);

  Tensor x = matmul(live.tokens, P.patch_w);
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    for (std::size_t c = 0; c < D; ++c) xr[c] += P.patch_b[c];
  }
  if (cache) {
    cache->tokens = live.tokens;
    cache->n = n;
    cache->layers.resize(cfg.layers);
  }

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& L = P.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    Tensor h = layer_norm(x, L.ln1_g, L.ln1_b, cfg.ln_eps, lc ? &lc->ln1 : nullptr);
    const Tensor q = matmul(h, L.wq), k = matmul(h, L.wk), v = matmul(h, L.wv);
    Tensor o({n, D});
    if (lc) {
      lc->qr.resize(cfg.heads);
      lc->kr.resize(cfg.heads);
      lc->v.resize(cfg.heads);
      lc->attn.resize(cfg.heads);
    }
    for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
      Tensor qr = rotate_rows(columns(q, hh * hd, hd), pos, rope, freqs);
      Tensor kr = rotate_rows(columns(k, hh * hd, hd), pos, rope, freqs);
      Tensor vh = columns(v, hh * hd, hd);
      Tensor oh = attention_head(qr, kr, vh, lc ? &lc->attn[hh] : nullptr, stats);
      put_columns(o, oh, hh * hd);
      if (lc) {
        lc->qr[hh] = std::move(qr);
        lc->kr[hh] = std::move(kr);
        lc->v[hh] = std::move(vh);
      }
    }
    accumulate(x, matmul(o, L.wo));

    Tensor h2 = layer_norm(x, L.ln2_g, L.ln2_b, cfg.ln_eps, lc ? &lc->ln2 : nullptr);
    Tensor u = matmul(h2, L.w1);
    Tensor gu = u;
    for (auto& val : gu.data()) val = gelu(val);
    accumulate(x, matmul(gu, L.w2));

    if (lc) {
      lc->h = std::move(h);
      lc->o = std::move(o);
      lc->h2 = std::move(h2);
      lc->u = std::move(u);
      lc->gu = std::move(gu);
    }
  }

  const Tensor z = layer_norm(x, P.final_g, P.final_b, cfg.ln_eps, cache ? &cache->final_ln : nullptr);
  Tensor pooled({1, D});
  for (std::size_t r = 0; r < n; ++r) {
    auto zr = z.row(r);
    for (std::size_t c = 0; c < D; ++c) pooled[c] += zr[c];
  }
  for (auto& val : pooled.data()) val /= static_cast<double>(n);

  Tensor proj = matmul(pooled, P.proj_w);
  for (std::size_t c = 0; c < cfg.d_out; ++c) proj[c] += P.proj_b[c];
  Tensor out = matmul(proj, P.head);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->proj = std::move(proj);
  }
  if (stats) stats->live_tokens = n;
  return out.reshaped({cfg.d_out});
}

// Accumulates parameter gradients for d(loss)/d(out) = dout.
inline void backward(const EncoderParams& P, const ForwardCache& cache, const Tensor& dout, const RopeConfig& rope,
                     const AxisFrequencies& freqs, std::span<const Position> pos, EncoderParams& G) {
  const auto& cfg = P.config;
  const std::size_t n = cache.n, D = cfg.dim, hd = cfg.head_dim();
  const Tensor dout_row = dout.reshaped({1, cfg.d_out});

  accumulate(G.head, matmul(transpose(cache.proj), dout_row));
  const Tensor dproj = matmul(dout_row, transpose(P.head));
  accumulate(G.proj_w, matmul(transpose(cache.pooled), dproj));
  for (std::size_t c = 0; c < cfg.d_out; ++c) G.proj_b[c] += dproj[c];
  const Tensor dpooled = matmul(dproj, transpose(P.proj_w));

  Tensor dz({n, D});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < D; ++c) dz(r, c) = dpooled[c] / static_cast<double>(n);
  Tensor dx = layer_norm_backward(dz, P.final_g, cache.final_ln, G.final_g, G.final_b);

  const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const auto& L = P.layers[l];
    auto& GL = G.layers[l];
    const auto& lc = cache.layers[l];

    // MLP residual branch.
    accumulate(GL.w2, matmul(transpose(lc.gu), dx));
    Tensor du = matmul(dx, transpose(L.w2));
    for (std::size_t i = 0; i < du.size(); ++i) du[i] *= gelu_grad(lc.u[i]);
    accumulate(GL.w1, matmul(transpose(lc.h2), du));
    const Tensor dh2 = matmul(du, transpose(L.w1));
    accumulate(dx, layer_norm_backward(dh2, L.ln2_g, lc.ln2, GL.ln2_g, GL.ln2_b));

    // Attention residual branch.
    accumulate(GL.wo, matmul(transpose(lc.o), dx));
    const Tensor dO = matmul(dx, transpose(L.wo));
    Tensor dq({n, D}), dk({n, D}), dv({n, D});
    for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
      const Tensor& A = lc.attn[hh];
      const Tensor dOh = columns(dO, hh * hd, hd);
      const Tensor dA = matmul(dOh, transpose(lc.v[hh]));
      put_columns(dv, matmul(transpose(A), dOh), hh * hd);
      Tensor dS({n, n});
      for (std::size_t i = 0; i < n; ++i) {
        double rowdot = 0.0;
        for (std::size_t j = 0; j < n; ++j) rowdot += dA(i, j) * A(i, j);
        for (std::size_t j = 0; j < n; ++j) dS(i, j) = A(i, j) * (dA(i, j) - rowdot) * inv;
      }
      Tensor dqr = matmul(dS, lc.kr[hh]);
      Tensor dkr = matmul(transpose(dS), lc.qr[hh]);
      for (std::size_t r = 0; r < n; ++r) {
        unrotate_inplace(dqr.row(r), pos[r], rope, freqs);
        unrotate_inplace(dkr.row(r), pos[r], rope, freqs);
      }
      put_columns(dq, dqr, hh * hd);
      put_columns(dk, dkr, hh * hd);
    }
    const Tensor hT = transpose(lc.h);
    accumulate(GL.wq, matmul(hT, dq));
    accumulate(GL.wk, matmul(hT, dk));
    accumulate(GL.wv, matmul(hT, dv));
    Tensor dh = matmul(dq, transpose(L.wq));
    accumulate(dh, matmul(dk, transpose(L.wk)));
    accumulate(dh, matmul(dv, transpose(L.wv)));
    accumulate(dx, layer_norm_backward(dh, L.ln1_g, lc.ln1, GL.ln1_g, GL.ln1_b));
  }

  accumulate(G.patch_w, matmul(transpose(cache.tokens), dx));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < D; ++c) G.patch_b[c] += dx(r, c);
}

inline TokenGrid live_view(const TokenGrid& grid) {
  if (grid.live_count() == 0) throw EmptyInputError("encoder input has no live tokens");
  return grid.live_count() == grid.size() ? grid : compact(grid);
}

}  // namespace detail

// Encodes the live tokens of a grid to a D_out vector. Dead tokens are
// dropped before any work; survivors keep their original (t, h, w).
inline Tensor forward(const EncoderParams& params, const TokenGrid& grid, const RopeConfig& rope,
                      ForwardStats* stats = nullptr) {
  params.config.validate();
  params.config.check_rope(rope);
  const TokenGrid live = detail::live_view(grid);
  if (stats) *stats = ForwardStats{};
  return detail::forward_live(params, live, rope, frequencies(rope), nullptr, stats);
}

struct Example {
  TokenGrid grid;
  Tensor target;  // D_out
};

struct LossAndGrads {
  double loss = 0.0;
  EncoderParams grads;
  ForwardStats stats;  // summed over the batch
};

// Batch-mean of per-item mean squared error, with analytic gradients for the
// trainable groups and exact zeros elsewhere.
inline LossAndGrads loss_and_grads(const EncoderParams& params, std::span<const Example> batch,
                                   const RopeConfig& rope, GroupSet trainable = GroupSet::all()) {
  if (batch.empty()) throw EmptyInputError("loss_and_grads needs a non-empty batch");
  params.config.validate();
  params.config.check_rope(rope);
  const auto freqs = frequencies(rope);
  const std::size_t d_out = params.config.d_out;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(d_out));

  LossAndGrads res{0.0, EncoderParams::zeros(params.config), {}};
  for (const auto& ex : batch) {
    if (ex.target.size() != d_out) {
      throw DimensionError("target length " + std::to_string(ex.target.size()) + " != d_out " +
                           std::to_string(d_out));
    }
    const TokenGrid live = detail::live_view(ex.grid);
    detail::ForwardCache cache;
    ForwardStats st;
    const Tensor out = detail::forward_live(params, live, rope, freqs, &cache, &st);
    res.stats.live_tokens += st.live_tokens;
    res.stats.attention_maps += st.attention_maps;
    res.stats.score_entries += st.score_entries;

    Tensor dout({d_out});
    double sq = 0.0;
    for (std::size_t i = 0; i < d_out; ++i) {
      const double e = out[i] - ex.target[i];
      sq += e * e;
      dout[i] = 2.0 * e * scale;
    }
    res.loss += sq * scale;
    detail::backward(params, cache, dout, rope, freqs, live.positions, res.grads);
  }

  res.grads.for_each([&trainable](const std::string&, ParamGroup g, Tensor& t) {
    if (!trainable.contains(g)) {
      for (auto& v : t.data()) v = 0.0;
    }
  });
  return res;
}

inline double batch_loss(const EncoderParams& params, std::span<const Example> batch, const RopeConfig& rope) {
  double loss = 0.0;
  const double d_out = static_cast<double>(params.config.d_out);
  for (const auto& ex : batch) {
    const Tensor out = forward(params, ex.grid, rope);
    for (std::size_t i = 0; i < out.size(); ++i) loss += (out[i] - ex.target[i]) * (out[i] - ex.target[i]);
  }
  return loss / (static_cast<double>(batch.size()) * d_out);
}

// ---------------------------------------------------------------------------
// Parameter serialization: one OMT file per tensor plus manifest.json.

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"patch_dim", c.patch_dim}, {"dim", c.dim},     {"layers", c.layers},       {"heads", c.heads},
          {"d_out", c.d_out},         {"mlp_ratio", c.mlp_ratio}, {"ln_eps", c.ln_eps}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.patch_dim = j.at("patch_dim").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.d_out = j.at("d_out").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.ln_eps = j.at("ln_eps").get<double>();
  c.validate();
  return c;
}

inline void save_params(const EncoderParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json groups = {{"encoder", nlohmann::json::array()},
                           {"projector", nlohmann::json::array()},
                           {"backbone", nlohmann::json::array()}};
  params.for_each([&](const std::string& name, ParamGroup g, const Tensor& t) {
    const std::string file = name + ".omt";
    save_omt(t, dir / file);
    groups[std::string(to_string(g))].push_back(file);
  });
  nlohmann::json manifest = {{"format", "omnivox-params-1"}, {"config", to_json(params.config)}, {"groups", groups}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

inline EncoderParams load_params(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad manifest: ") + e.what());
  }
  EncoderParams params = EncoderParams::zeros(encoder_config_from_json(manifest.at("config")));
  const auto& groups = manifest.at("groups");
  params.for_each([&](const std::string& name, ParamGroup g, Tensor& t) {
    const std::string file = name + ".omt";
    const auto& listed = groups.at(std::string(to_string(g)));
    if (std::find(listed.begin(), listed.end(), file) == listed.end()) {
      throw IoError("manifest does not list " + file + " under group " + std::string(to_string(g)));
    }
    Tensor loaded = load_omt(dir / file);
    if (loaded.shape() != t.shape()) {
      throw DimensionError(file + " has shape " + shape_str(loaded.shape()) + ", expected " + shape_str(t.shape()));
    }
    t = std::move(loaded);
  });
  return params;
}

}  // namespace omnivox
