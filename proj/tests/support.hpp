#pragma once

// Test-only helpers shared by the unit suites and the acceptance binary.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "omnivox/captions.hpp"
#include "omnivox/encoder.hpp"
#include "omnivox/media.hpp"
#include "omnivox/random.hpp"

namespace omnivox::testing {

inline VisualMedia random_media(Modality m, std::size_t T, std::size_t C, std::size_t H, std::size_t W,
                                std::uint64_t seed) {
  Rng rng(seed);
  Tensor f({T, C, H, W});
  for (auto& v : f.data()) v = rng.uniform();
  return VisualMedia(m, std::move(f));
}

inline Tensor random_target(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n});
  for (auto& v : t.data()) v = 0.5 * rng.normal();
  return t;
}

struct GradCheckResult {
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  std::size_t checked = 0;
};

// Central differences on every parameter. An entry counts as matching when
// |analytic - numeric| <= rel_tol * max(|analytic|, |numeric|, floor).
inline GradCheckResult gradient_check(EncoderParams params, std::span<const Example> batch, const RopeConfig& rope,
                                      double eps, double floor) {
  const auto analytic = loss_and_grads(params, batch, rope).grads;
  auto p = tensors_of(params);
  const auto g = tensors_of(analytic);
  GradCheckResult r;
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto pd = p[t]->data();
    const auto gd = g[t]->data();
    for (std::size_t k = 0; k < pd.size(); ++k) {
      const double orig = pd[k];
      pd[k] = orig + eps;
      const double up = batch_loss(params, batch, rope);
      pd[k] = orig - eps;
      const double down = batch_loss(params, batch, rope);
      pd[k] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double diff = std::abs(numeric - gd[k]);
      const double denom = std::max({std::abs(numeric), std::abs(gd[k]), floor});
      r.worst_rel = std::max(r.worst_rel, diff / denom);
      r.worst_abs = std::max(r.worst_abs, diff);
      ++r.checked;
    }
  }
  return r;
}

// Small randomized model and batch for gradient checks: 2 layers, D = 16.
struct GradCase {
  EncoderParams params;
  RopeConfig rope;
  std::vector<Example> batch;
};

inline GradCase grad_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9c));
  EncoderConfig cfg;
  cfg.patch_dim = 4;
  cfg.dim = 16;
  cfg.layers = 2;
  cfg.heads = 1 + rng.below(2);
  cfg.d_out = 4;
  GradCase c{EncoderParams::init(cfg, seed), RopeConfig::for_head_dim(cfg.head_dim()), {}};
  // Perturb gains and shifts away from 1 and 0 so their gradients are generic.
  c.params.for_each([&rng](const std::string& name, ParamGroup, Tensor& t) {
    if (name.find("ln") != std::string::npos || name.find("bias") != std::string::npos) {
      for (auto& v : t.data()) v += 0.2 * rng.normal();
    }
  });
  const std::size_t T = 2 + rng.below(2);
  c.batch.push_back({patchify(random_media(Modality::Video, T, 1, 4, 4, rng.next()), 2), random_target(4, rng.next())});
  c.batch.push_back({patchify(random_media(Modality::Image2D, 1, 1, 4, 6, rng.next()), 2), random_target(4, rng.next())});
  return c;
}


// Random short captions assembled from clinical, filler and hedge words so
// the mock scorer sees a spread of scores.
inline std::vector<CandidateCaption> mock_candidates(std::size_t n, std::uint64_t seed) {
  static const char* kWords[] = {"surgical", "tissue", "lesion", "grasper", "liver", "scan", "the", "a",
                                 "view",     "shows",  "near",   "with",    "maybe", "probably", "video", "lorem"};
  Rng rng(seed);
  std::vector<CandidateCaption> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng.below(14);
    std::string text;
    for (std::size_t w = 0; w < len; ++w) {
      if (w) text += ' ';
      text += kWords[rng.below(std::size(kWords))];
    }
    if (rng.below(2)) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    if (rng.below(2)) text += '.';
    out.push_back({"m" + std::to_string(i), text, std::nullopt, false});
  }
  return out;
}

// Integer form of the acceptance rule, written independently of AcceptRule.
inline bool accept_oracle(int r, int f, int a, int floor, double mean) {
  return r >= floor && f >= floor && a >= floor && static_cast<double>(r + f + a) >= 3.0 * mean;
}

}  // namespace omnivox::testing
