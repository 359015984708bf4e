#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "omnivox/error.hpp"
#include "omnivox/random.hpp"
#include "omnivox/tensor.hpp"

namespace omnivox {

enum class Modality { Image2D, Volume3D, Video };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Image2D: return "image2d";
    case Modality::Volume3D: return "volume3d";
    case Modality::Video: return "video";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "image2d" || s == "image") return Modality::Image2D;
  if (s == "volume3d" || s == "volume") return Modality::Volume3D;
  if (s == "video") return Modality::Video;
  throw ConfigError("unknown modality '" + std::string(s) + "' (expected image2d, volume3d, video)");
}

// Patch-grid coordinate of a token: frame/slice, row, column.
struct Position {
  std::size_t t = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  friend bool operator==(const Position&, const Position&) = default;
};

// A T x C x H x W stack of frames with pixels in [0, 1]. T is the slice count
// for volumes, the frame count for videos, and 1 for images.
class VisualMedia {
 public:
  VisualMedia(Modality modality, Tensor frames) : modality_(modality), frames_(std::move(frames)) {
    if (frames_.rank() != 4) {
      throw DimensionError("media must be T x C x H x W, got " + shape_str(frames_.shape()));
    }
    const std::size_t c = frames_.extent(1);
    if (c != 1 && c != 3) throw DimensionError("media channels must be 1 or 3, got " + std::to_string(c));
    if (modality_ == Modality::Image2D && frames_.extent(0) != 1) {
      throw DimensionError("image2d media must have T = 1, got T = " + std::to_string(frames_.extent(0)));
    }
    for (double v : frames_.data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ContractError("pixel value " + std::to_string(v) + " outside [0, 1]");
    }
  }

  Modality modality() const noexcept { return modality_; }
  const Tensor& frames() const noexcept { return frames_; }
  std::size_t frame_count() const { return frames_.extent(0); }
  std::size_t channels() const { return frames_.extent(1); }
  std::size_t height() const { return frames_.extent(2); }
  std::size_t width() const { return frames_.extent(3); }

  // Same pixels, different declared modality.
  VisualMedia as(Modality modality) const { return VisualMedia(modality, frames_); }

 private:
  Modality modality_;
  Tensor frames_;
};

struct GridShape {
  std::size_t frames = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t per_frame() const { return rows * cols; }
  std::size_t total() const { return frames * rows * cols; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

// Flattened raw-pixel patch tokens with their (t, h, w) grid positions.
// Pruning only clears live flags; compact() drops the dead rows.
struct TokenGrid {
  Modality modality = Modality::Image2D;
  Tensor tokens;                       // N x (C * p * p)
  std::vector<Position> positions;     // N
  std::vector<std::uint8_t> live;      // N, 1 = live
  GridShape grid;
  std::size_t patch_size = 0;
  std::size_t channels = 0;

  std::size_t size() const { return positions.size(); }
  std::size_t patch_dim() const { return tokens.extent(1); }
  std::size_t live_count() const {
    return static_cast<std::size_t>(std::count(live.begin(), live.end(), std::uint8_t{1}));
  }
};

inline TokenGrid patchify(const VisualMedia& media, std::size_t patch_size) {
  if (patch_size == 0) throw DivisibilityError("patch size must be positive");
  const std::size_t T = media.frame_count(), C = media.channels();
  const std::size_t H = media.height(), W = media.width();
  if (H % patch_size != 0 || W % patch_size != 0) {
    throw DivisibilityError("frame " + std::to_string(H) + "x" + std::to_string(W) +
                            " not divisible by patch size " + std::to_string(patch_size));
  }
  const std::size_t p = patch_size, hp = H / p, wp = W / p;
  const std::size_t n = T * hp * wp, d = C * p * p;

  TokenGrid g;
  g.modality = media.modality();
  g.tokens = Tensor({n, d});
  g.positions.reserve(n);
  g.live.assign(n, 1);
  g.grid = {T, hp, wp};
  g.patch_size = p;
  g.channels = C;

  auto src = media.frames().data();
  std::size_t tok = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t gh = 0; gh < hp; ++gh) {
      for (std::size_t gw = 0; gw < wp; ++gw, ++tok) {
        auto dst = g.tokens.row(tok);
        std::size_t k = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = 0; y < p; ++y) {
            const std::size_t base = ((t * C + c) * H + gh * p + y) * W + gw * p;
            for (std::size_t x = 0; x < p; ++x) dst[k++] = src[base + x];
          }
        g.positions.push_back({t, gh, gw});
      }
    }
  }
  return g;
}

// Inverse of patchify for a full (unpruned, any order) grid.
inline VisualMedia unpatchify(const TokenGrid& g) {
  const std::size_t p = g.patch_size, C = g.channels;
  const std::size_t T = g.grid.frames, H = g.grid.rows * p, W = g.grid.cols * p;
  if (g.size() != g.grid.total()) throw DimensionError("unpatchify needs every grid cell present");
  Tensor frames({T, C, H, W});
  auto dst = frames.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& pos = g.positions[i];
    auto src = g.tokens.row(i);
    std::size_t k = 0;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < p; ++y) {
        const std::size_t base = ((pos.t * C + c) * H + pos.h * p + y) * W + pos.w * p;
        for (std::size_t x = 0; x < p; ++x) dst[base + x] = src[k++];
      }
  }
  return VisualMedia(g.modality, std::move(frames));
}

// Keep only live tokens, preserving order and original positions.
inline TokenGrid compact(const TokenGrid& g) {
  const std::size_t n = g.live_count(), d = g.patch_dim();
  if (n == 0) throw EmptyInputError("token grid has no live tokens");
  TokenGrid out;
  out.modality = g.modality;
  out.tokens = Tensor({n, d});
  out.positions.reserve(n);
  out.live.assign(n, 1);
  out.grid = g.grid;
  out.patch_size = g.patch_size;
  out.channels = g.channels;
  std::size_t j = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.live[i]) continue;
    auto src = g.tokens.row(i);
    std::copy(src.begin(), src.end(), out.tokens.row(j).begin());
    out.positions.push_back(g.positions[i]);
    ++j;
  }
  return out;
}

// Largest centered H x W window divisible by the patch size.
inline VisualMedia center_crop(const VisualMedia& media, std::size_t patch_size) {
  if (patch_size == 0) throw DivisibilityError("patch size must be positive");
  const std::size_t H = media.height(), W = media.width();
  const std::size_t h2 = H / patch_size * patch_size, w2 = W / patch_size * patch_size;
  if (h2 == 0 || w2 == 0) {
    throw DivisibilityError("frame " + std::to_string(H) + "x" + std::to_string(W) +
                            " is smaller than patch size " + std::to_string(patch_size) +
                            "; nothing left after crop");
  }
  if (h2 == H && w2 == W) return media;
  const std::size_t T = media.frame_count(), C = media.channels();
  const std::size_t y0 = (H - h2) / 2, x0 = (W - w2) / 2;
  Tensor out({T, C, h2, w2});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < h2; ++y)
        for (std::size_t x = 0; x < w2; ++x) out.at({t, c, y, x}) = media.frames().at({t, c, y0 + y, x0 + x});
  return VisualMedia(media.modality(), std::move(out));
}

enum class SynthKind { Noise, DriftingBlob, DuplicateRatio };

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "noise") return SynthKind::Noise;
  if (s == "drifting-blob") return SynthKind::DriftingBlob;
  if (s == "duplicate-ratio") return SynthKind::DuplicateRatio;
  throw ConfigError("unknown synth kind '" + std::string(s) +
                    "' (expected noise, drifting-blob, duplicate-ratio)");
}

struct SynthParams {
  Modality modality = Modality::Video;
  std::size_t frames = 8;
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  // duplicate-ratio: fraction of (frame >= 1, location) pairs that repeat the
  // previous frame's patch, and the distance threshold they must fall under.
  double rho = 0.6;
  double threshold = 0.1;
  std::size_t patch_size = 4;
  // drifting-blob: Gaussian radius and per-frame drift in pixels.
  double sigma = 4.0;
  double velocity_x = 1.0;
  double velocity_y = 0.5;
};

namespace detail {

inline VisualMedia synth_noise(const SynthParams& sp, Rng& rng) {
  Tensor f({sp.frames, sp.channels, sp.height, sp.width});
  for (auto& v : f.data()) v = rng.uniform();
  return VisualMedia(sp.modality, std::move(f));
}

inline VisualMedia synth_blob(const SynthParams& sp, Rng& rng) {
  const std::size_t T = sp.frames, C = sp.channels, H = sp.height, W = sp.width;
  if (!(sp.sigma > 0.0)) throw ContractError("drifting-blob sigma must be positive");
  // Static low-amplitude texture so the background is not perfectly flat.
  std::vector<double> texture(C * H * W);
  for (auto& v : texture) v = 0.04 * rng.uniform();
  const double cy0 = rng.uniform(0.25, 0.75) * static_cast<double>(H);
  const double cx0 = rng.uniform(0.25, 0.75) * static_cast<double>(W);
  std::vector<double> gain(C);
  for (auto& g : gain) g = rng.uniform(0.6, 0.8);

  Tensor f({T, C, H, W});
  auto d = f.data();
  const double inv = 1.0 / (2.0 * sp.sigma * sp.sigma);
  for (std::size_t t = 0; t < T; ++t) {
    const double cy = cy0 + sp.velocity_y * static_cast<double>(t);
    const double cx = cx0 + sp.velocity_x * static_cast<double>(t);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const double v = 0.1 + texture[(c * H + y) * W + x] + gain[c] * std::exp(-(dy * dy + dx * dx) * inv);
          d[((t * C + c) * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
        }
  }
  return VisualMedia(sp.modality, std::move(f));
}

// Frame 0 is noise. Every later (frame, location) patch either copies the
// previous frame's patch (distance 0) or moves every pixel by at least
// max(0.3, 2 * threshold), so its mean absolute distance to the previous
// patch, which is also the last kept patch, is well above the threshold.
inline VisualMedia synth_duplicates(const SynthParams& sp, Rng& rng) {
  if (!(sp.rho >= 0.0 && sp.rho <= 1.0)) {
    throw ContractError("duplicate-ratio rho must be in [0, 1], got " + std::to_string(sp.rho));
  }
  if (!(sp.threshold > 0.0 && sp.threshold < 0.25)) {
    throw ContractError("duplicate-ratio threshold must be in (0, 0.25), got " + std::to_string(sp.threshold));
  }
  const std::size_t T = sp.frames, C = sp.channels, H = sp.height, W = sp.width, p = sp.patch_size;
  if (p == 0 || H % p != 0 || W % p != 0) {
    throw DivisibilityError("duplicate-ratio frame size must be divisible by patch size");
  }
  const std::size_t hp = H / p, wp = W / p, locs = hp * wp;
  const std::size_t pairs = (T - 1) * locs;
  const auto dup_count = static_cast<std::size_t>(std::llround(sp.rho * static_cast<double>(pairs)));

  std::vector<std::uint8_t> dup(pairs, 0);
  std::fill(dup.begin(), dup.begin() + static_cast<std::ptrdiff_t>(dup_count), 1);
  rng.shuffle(dup.begin(), dup.end());

  Tensor f({T, C, H, W});
  auto d = f.data();
  for (std::size_t i = 0; i < C * H * W; ++i) d[i] = rng.uniform();
  const double lo = std::max(0.3, 2.0 * sp.threshold);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t gh = 0; gh < hp; ++gh)
      for (std::size_t gw = 0; gw < wp; ++gw) {
        const bool copy = dup[(t - 1) * locs + gh * wp + gw] != 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = gh * p; y < (gh + 1) * p; ++y)
            for (std::size_t x = gw * p; x < (gw + 1) * p; ++x) {
              const double prev = d[(((t - 1) * C + c) * H + y) * W + x];
              double v = prev;
              if (!copy) {
                const double step = rng.uniform(lo, 0.5);
                v = prev < 0.5 ? prev + step : prev - step;
              }
              d[((t * C + c) * H + y) * W + x] = v;
            }
      }
  }
  return VisualMedia(sp.modality, std::move(f));
}

}  // namespace detail

inline VisualMedia synth_media(SynthKind kind, const SynthParams& params, std::uint64_t seed) {
  if (params.frames == 0 || params.height == 0 || params.width == 0) {
    throw ContractError("synthetic media extents must be positive");
  }
  if (params.modality == Modality::Image2D && params.frames != 1) {
    throw ContractError("image2d synthetic media must have exactly 1 frame");
  }
  Rng rng(seed);
  switch (kind) {
    case SynthKind::Noise: return detail::synth_noise(params, rng);
    case SynthKind::DriftingBlob: return detail::synth_blob(params, rng);
    case SynthKind::DuplicateRatio: return detail::synth_duplicates(params, rng);
  }
  throw ContractError("unknown synth kind");
}

}  // namespace omnivox
