#include <cmath>
#include <filesystem>
#include <numeric>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "omnivox/encoder.hpp"
#include "omnivox/prune.hpp"
#include "support.hpp"

using namespace omnivox;
using omnivox::testing::random_media;
using omnivox::testing::random_target;

namespace {

EncoderConfig small_config(std::size_t patch_dim, std::size_t heads = 1) {
  EncoderConfig c;
  c.patch_dim = patch_dim;
  c.dim = 16;
  c.layers = 2;
  c.heads = heads;
  c.d_out = 8;
  return c;
}

RopeConfig rope_for(const EncoderConfig& c) { return RopeConfig::for_head_dim(c.head_dim()); }

}  // namespace

// All blocks zeroed, so each residual stream passes through untouched; the
// output is the final layer norm of the embedded token pushed through an
// identity projector and identity head.
TEST(Forward, SingleTokenHandTrace) {
  EncoderConfig cfg;
  cfg.patch_dim = 4;
  cfg.dim = 4;
  cfg.layers = 2;
  cfg.heads = 1;
  cfg.d_out = 4;
  EncoderParams p = EncoderParams::zeros(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    p.patch_w(i, i) = 1.0;
    p.proj_w(i, i) = 1.0;
    p.head(i, i) = 1.0;
    p.final_g[i] = 1.0;
  }
  TokenGrid g = patchify(VisualMedia(Modality::Image2D, Tensor({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.6})), 2);
  const Tensor out = forward(p, g, rope_for(cfg));
  // mean 0.3, variance (0.04 + 0.01 + 0 + 0.09) / 4 = 0.035
  const double s = 1.0 / std::sqrt(0.035 + 1e-5);
  const std::vector<double> expected{-0.2 * s, -0.1 * s, 0.0, 0.3 * s};
  ASSERT_EQ(out.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);

  // A projector bias shifts the output one-for-one.
  for (std::size_t i = 0; i < 4; ++i) p.proj_b[i] = 0.5 * static_cast<double>(i);
  const Tensor shifted = forward(p, g, rope_for(cfg));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(shifted[i], expected[i] + 0.5 * static_cast<double>(i), 1e-12);
}

TEST(Forward, StorageOrderInvariance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cfg = small_config(16, 1 + seed % 2);
    const auto p = EncoderParams::init(cfg, seed);
    const TokenGrid g = patchify(random_media(Modality::Video, 3, 1, 8, 8, seed), 4);
    TokenGrid s = g;
    std::vector<std::size_t> perm(g.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      auto src = g.tokens.row(perm[i]);
      std::copy(src.begin(), src.end(), s.tokens.row(i).begin());
      s.positions[i] = g.positions[perm[i]];
    }
    const Tensor a = forward(p, g, rope_for(cfg)), b = forward(p, s, rope_for(cfg));
    EXPECT_LT(max_abs_diff(a, b), 1e-10);
  }
}

TEST(Forward, ImageEqualsOneFrameVideoBitwise) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cfg = small_config(seed % 2 ? 48 : 16, 1 + seed % 2);
    const std::size_t C = seed % 2 ? 3 : 1;
    const auto p = EncoderParams::init(cfg, seed);
    const VisualMedia img = random_media(Modality::Image2D, 1, C, 12, 8, seed);
    const Tensor a = forward(p, patchify(img, 4), rope_for(cfg));
    const Tensor b = forward(p, patchify(img.as(Modality::Video), 4), rope_for(cfg));
    const Tensor c = forward(p, patchify(img.as(Modality::Volume3D), 4), rope_for(cfg));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
  }
}

TEST(Forward, SameParametersServeEveryModality) {
  const auto cfg = small_config(16);
  const auto p = EncoderParams::init(cfg, 1);
  for (auto m : {Modality::Image2D, Modality::Volume3D, Modality::Video}) {
    const std::size_t T = m == Modality::Image2D ? 1 : 4;
    const Tensor out = forward(p, patchify(random_media(m, T, 1, 8, 8, 3), 4), rope_for(cfg));
    EXPECT_EQ(out.size(), cfg.d_out);
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(Forward, EmptyInputRaises) {
  const auto cfg = small_config(16);
  TokenGrid g = patchify(random_media(Modality::Video, 2, 1, 8, 8, 0), 4);
  g.live.assign(g.size(), 0);
  EXPECT_THROW(forward(EncoderParams::init(cfg, 0), g, rope_for(cfg)), EmptyInputError);
}

TEST(Forward, RejectsMismatchedShapes) {
  const auto cfg = small_config(16);
  const auto p = EncoderParams::init(cfg, 0);
  EXPECT_THROW(forward(p, patchify(random_media(Modality::Video, 2, 1, 8, 8, 0), 2), rope_for(cfg)), DimensionError);
  EXPECT_THROW(forward(p, patchify(random_media(Modality::Video, 2, 1, 8, 8, 0), 4), RopeConfig{}), ConfigError);
}

TEST(Forward, ScoreCounterIsLayersTimesHeadsTimesNSquared) {
  for (std::size_t heads : {1u, 2u, 4u}) {
    const auto cfg = small_config(16, heads);
    const auto p = EncoderParams::init(cfg, heads);
    TokenGrid g = patchify(random_media(Modality::Video, 3, 1, 8, 8, 2), 4);
    g.live[4] = g.live[7] = g.live[9] = 0;
    ForwardStats st;
    forward(p, g, rope_for(cfg), &st);
    EXPECT_EQ(st.live_tokens, 9u);
    EXPECT_EQ(st.attention_maps, cfg.layers * heads);
    EXPECT_EQ(st.score_entries, cfg.layers * heads * 81u);
  }
}

// Dead tokens are dropped outright: running on the pruned grid equals running
// on its compacted survivors.
TEST(Forward, PrunedGridEqualsCompactedSurvivors) {
  const auto cfg = small_config(16);
  const auto p = EncoderParams::init(cfg, 4);
  SynthParams sp;
  sp.frames = 6;
  sp.height = 16;
  sp.width = 16;
  const auto [pg, rep] = prune(patchify(synth_media(SynthKind::DuplicateRatio, sp, 5), 4), PruneConfig{0.1});
  ASSERT_GT(rep.pruned, 0u);
  EXPECT_EQ(forward(p, pg, rope_for(cfg)), forward(p, compact(pg), rope_for(cfg)));
}

TEST(Forward, PruningWithNothingBelowThresholdIsBitIdentical) {
  const auto cfg = small_config(16);
  const auto p = EncoderParams::init(cfg, 6);
  const TokenGrid g = patchify(random_media(Modality::Video, 4, 1, 8, 8, 6), 4);
  const auto [pg, rep] = prune(g, PruneConfig{0.05});
  ASSERT_EQ(rep.pruned, 0u);
  EXPECT_EQ(forward(p, pg, rope_for(cfg)), forward(p, g, rope_for(cfg)));
}

TEST(LossAndGrads, ZeroAtTarget) {
  const auto cfg = small_config(16);
  const auto p = EncoderParams::init(cfg, 2);
  const TokenGrid g = patchify(random_media(Modality::Video, 2, 1, 8, 8, 2), 4);
  const std::vector<Example> batch{{g, forward(p, g, rope_for(cfg))}};
  const auto lg = loss_and_grads(p, batch, rope_for(cfg));
  EXPECT_EQ(lg.loss, 0.0);
  lg.grads.for_each([](const std::string& name, ParamGroup, const Tensor& t) {
    for (double v : t.data()) ASSERT_LE(std::abs(v), 1e-12) << name;
  });
}

TEST(LossAndGrads, DuplicatedItemLeavesMeanUnchanged) {
  const auto cfg = small_config(16);
  const auto p = EncoderParams::init(cfg, 3);
  const Example ex{patchify(random_media(Modality::Video, 2, 1, 8, 8, 3), 4), random_target(cfg.d_out, 3)};
  const std::vector<Example> one{ex}, two{ex, ex};
  const auto a = loss_and_grads(p, one, rope_for(cfg));
  const auto b = loss_and_grads(p, two, rope_for(cfg));
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  const auto ga = tensors_of(a.grads), gb = tensors_of(b.grads);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_LE(max_abs_diff(*ga[i], *gb[i]), 1e-15);
}

TEST(LossAndGrads, LossMatchesBatchLoss) {
  const auto c = omnivox::testing::grad_case(11);
  EXPECT_NEAR(loss_and_grads(c.params, c.batch, c.rope).loss, batch_loss(c.params, c.batch, c.rope), 1e-14);
}

TEST(LossAndGrads, FrozenGroupsGetExactZeros) {
  const auto c = omnivox::testing::grad_case(1);
  const auto lg = loss_and_grads(c.params, c.batch, c.rope, GroupSet{true, true, false});
  bool saw_nonzero = false;
  lg.grads.for_each([&](const std::string& name, ParamGroup g, const Tensor& t) {
    for (double v : t.data()) {
      if (g == ParamGroup::Backbone) {
        ASSERT_EQ(v, 0.0) << name;
      } else if (v != 0.0) {
        saw_nonzero = true;
      }
    }
  });
  EXPECT_TRUE(saw_nonzero);
  const auto none = loss_and_grads(c.params, c.batch, c.rope, GroupSet::none());
  none.grads.for_each([](const std::string&, ParamGroup, const Tensor& t) {
    for (double v : t.data()) ASSERT_EQ(v, 0.0);
  });
}

TEST(LossAndGrads, EmptyBatchRaises) {
  const auto c = omnivox::testing::grad_case(0);
  EXPECT_THROW(loss_and_grads(c.params, std::span<const Example>{}, c.rope), EmptyInputError);
}

TEST(LossAndGrads, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto c = omnivox::testing::grad_case(seed);
    const auto r = omnivox::testing::gradient_check(c.params, c.batch, c.rope, 1e-5, 1e-4);
    EXPECT_LT(r.worst_rel, 1e-6) << "seed " << seed << " worst abs " << r.worst_abs;
    EXPECT_EQ(r.checked, c.params.parameter_count());
  }
}

TEST(Params, GroupsPartitionEveryTensor) {
  const auto p = EncoderParams::init(small_config(16), 0);
  std::size_t enc = 0, proj = 0, back = 0;
  p.for_each([&](const std::string&, ParamGroup g, const Tensor& t) {
    EXPECT_TRUE(t.all_finite());
    (g == ParamGroup::Encoder ? enc : g == ParamGroup::Projector ? proj : back) += 1;
  });
  EXPECT_EQ(enc, 4u + 10u * 2u);
  EXPECT_EQ(proj, 2u);
  EXPECT_EQ(back, 1u);
}

TEST(Params, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "omnivox_encoder_params";
  std::filesystem::remove_all(dir);
  EncoderParams p = EncoderParams::init(small_config(16, 2), 9);
  p.for_each([](const std::string&, ParamGroup, Tensor& t) {
    for (auto& v : t.data()) v = omt_narrow(v);
  });
  save_params(p, dir);
  const EncoderParams q = load_params(dir);
  EXPECT_EQ(q.config.heads, 2u);
  const auto a = tensors_of(std::as_const(p)), b = tensors_of(q);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_THROW(load_params(dir / "missing"), IoError);
}

TEST(Config, Validation) {
  EncoderConfig c;
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.dim = 6;
  c.heads = 2;
  EXPECT_THROW(c.validate(), ConfigError);  // odd head_dim
  c = EncoderConfig{};
  EXPECT_NO_THROW(c.check_rope(RopeConfig::for_head_dim(32)));
  EXPECT_THROW(c.check_rope(RopeConfig{}), ConfigError);
}
