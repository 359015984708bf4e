#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "omnivox/media.hpp"
#include "omnivox/prune.hpp"
#include "omnivox/random.hpp"

using namespace omnivox;

namespace {

VisualMedia random_media(Modality m, std::size_t T, std::size_t C, std::size_t H, std::size_t W, std::uint64_t seed) {
  Rng rng(seed);
  Tensor f({T, C, H, W});
  for (auto& v : f.data()) v = rng.uniform();
  return VisualMedia(m, std::move(f));
}

// Counts frames >= 1 whose patch at (gh, gw) lies within tau of the last kept
// patch there, reading pixels straight from the frame tensor.
std::size_t brute_force_pruned(const VisualMedia& media, std::size_t p, double tau) {
  const auto& f = media.frames();
  const std::size_t T = media.frame_count(), C = media.channels();
  const std::size_t hp = media.height() / p, wp = media.width() / p;
  std::size_t pruned = 0;
  for (std::size_t gh = 0; gh < hp; ++gh)
    for (std::size_t gw = 0; gw < wp; ++gw) {
      std::size_t ref = 0;
      for (std::size_t t = 1; t < T; ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x)
              s += std::abs(f.at({t, c, gh * p + y, gw * p + x}) - f.at({ref, c, gh * p + y, gw * p + x}));
        if (s / static_cast<double>(C * p * p) < tau) {
          ++pruned;
        } else {
          ref = t;
        }
      }
    }
  return pruned;
}

}  // namespace

TEST(Patchify, SingleImageFourTokens) {
  Tensor f({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) f[i] = static_cast<double>(i) / 16.0;
  const TokenGrid g = patchify(VisualMedia(Modality::Image2D, f), 2);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g.patch_dim(), 4u);
  const std::vector<Position> expected{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}};
  EXPECT_EQ(g.positions, expected);
  // Top-left block holds pixels (0,0), (0,1), (1,0), (1,1).
  EXPECT_EQ(g.tokens(0, 0), 0.0 / 16);
  EXPECT_EQ(g.tokens(0, 1), 1.0 / 16);
  EXPECT_EQ(g.tokens(0, 2), 4.0 / 16);
  EXPECT_EQ(g.tokens(0, 3), 5.0 / 16);
  EXPECT_EQ(g.live_count(), 4u);
}

TEST(Patchify, ConstantVideoOneTokenPerFrame) {
  const TokenGrid g = patchify(VisualMedia(Modality::Video, Tensor::filled({3, 1, 2, 2}, 0.5)), 2);
  ASSERT_EQ(g.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (double v : g.tokens.row(i)) EXPECT_EQ(v, 0.5);
    EXPECT_EQ(g.positions[i], (Position{i, 0, 0}));
  }
}

TEST(Patchify, VolumeMatchesNestedLoopOracle) {
  const VisualMedia m = random_media(Modality::Volume3D, 2, 3, 8, 8, 99);
  const std::size_t p = 4;
  const TokenGrid g = patchify(m, p);
  ASSERT_EQ(g.size(), 8u);
  std::size_t tok = 0;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t gh = 0; gh < 2; ++gh)
      for (std::size_t gw = 0; gw < 2; ++gw, ++tok) {
        std::vector<double> block;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x) block.push_back(m.frames().at({t, c, gh * p + y, gw * p + x}));
        const auto row = g.tokens.row(tok);
        ASSERT_EQ(std::vector<double>(row.begin(), row.end()), block) << "token " << tok;
        EXPECT_EQ(g.positions[tok], (Position{t, gh, gw}));
      }
}

TEST(Patchify, RejectsNonDivisibleFrames) {
  EXPECT_THROW(patchify(random_media(Modality::Image2D, 1, 1, 6, 8, 1), 4), DivisibilityError);
  EXPECT_THROW(patchify(random_media(Modality::Image2D, 1, 1, 8, 8, 1), 0), DivisibilityError);
}

TEST(Patchify, PositionsStayInsideGridAndImagesAreFlat) {
  const TokenGrid v = patchify(random_media(Modality::Video, 3, 1, 8, 12, 4), 4);
  EXPECT_EQ(v.size(), 3u * 2 * 3);
  for (const auto& p : v.positions) {
    EXPECT_LT(p.t, 3u);
    EXPECT_LT(p.h, 2u);
    EXPECT_LT(p.w, 3u);
  }
  const TokenGrid i = patchify(random_media(Modality::Image2D, 1, 3, 8, 8, 4), 2);
  for (const auto& p : i.positions) EXPECT_EQ(p.t, 0u);
}

TEST(Patchify, UnpatchifyRoundTripIsExact) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 1 + rng.below(4);
    const std::size_t T = 1 + rng.below(4), C = rng.below(2) ? 3 : 1;
    const std::size_t H = p * (1 + rng.below(4)), W = p * (1 + rng.below(4));
    const VisualMedia m = random_media(Modality::Video, T, C, H, W, rng.next());
    EXPECT_EQ(unpatchify(patchify(m, p)).frames(), m.frames());
  }
}

TEST(Patchify, TokenCountDependsOnlyOnGeometry) {
  const auto a = patchify(random_media(Modality::Video, 4, 1, 16, 8, 1), 4);
  const auto b = patchify(VisualMedia(Modality::Video, Tensor::filled({4, 1, 16, 8}, 0.25)), 4);
  EXPECT_EQ(a.size(), b.size());
  EXPECT_EQ(a.positions, b.positions);
}

TEST(VisualMedia, EnforcesInvariants) {
  EXPECT_THROW(VisualMedia(Modality::Image2D, Tensor({2, 1, 4, 4})), DimensionError);
  EXPECT_THROW(VisualMedia(Modality::Video, Tensor({2, 2, 4, 4})), DimensionError);
  EXPECT_THROW(VisualMedia(Modality::Video, Tensor({2, 4, 4})), DimensionError);
  EXPECT_THROW(VisualMedia(Modality::Video, Tensor::filled({1, 1, 2, 2}, 1.5)), ContractError);
  EXPECT_NO_THROW(VisualMedia(Modality::Volume3D, Tensor::filled({5, 3, 2, 2}, 1.0)));
}

TEST(CenterCrop, CropsToPatchMultiple) {
  const VisualMedia m = random_media(Modality::Image2D, 1, 1, 10, 9, 2);
  const VisualMedia c = center_crop(m, 4);
  EXPECT_EQ(c.height(), 8u);
  EXPECT_EQ(c.width(), 8u);
  EXPECT_EQ(c.frames().at({0, 0, 0, 0}), m.frames().at({0, 0, 1, 0}));
  EXPECT_THROW(center_crop(random_media(Modality::Image2D, 1, 1, 3, 9, 2), 4), DivisibilityError);
}

TEST(Compact, KeepsOnlyLiveTokensWithPositions) {
  TokenGrid g = patchify(random_media(Modality::Video, 2, 1, 4, 4, 3), 2);
  g.live = {1, 0, 1, 0, 0, 1, 1, 0};
  const TokenGrid c = compact(g);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.positions[1], g.positions[2]);
  EXPECT_EQ(c.positions[2], g.positions[5]);
  const auto r = c.tokens.row(3);
  const auto src = g.tokens.row(6);
  EXPECT_TRUE(std::equal(r.begin(), r.end(), src.begin()));
  g.live.assign(8, 0);
  EXPECT_THROW(compact(g), EmptyInputError);
}

TEST(Synth, NoiseIsDeterministic) {
  SynthParams sp;
  sp.modality = Modality::Image2D;
  sp.frames = 1;
  EXPECT_EQ(synth_media(SynthKind::Noise, sp, 42).frames(), synth_media(SynthKind::Noise, sp, 42).frames());
  EXPECT_NE(synth_media(SynthKind::Noise, sp, 42).frames(), synth_media(SynthKind::Noise, sp, 43).frames());
}

TEST(Synth, FullDuplicateRatioRepeatsFrames) {
  SynthParams sp;
  sp.frames = 5;
  sp.rho = 1.0;
  const VisualMedia m = synth_media(SynthKind::DuplicateRatio, sp, 1);
  const auto& f = m.frames();
  const std::size_t per = f.size() / 5;
  for (std::size_t t = 1; t < 5; ++t)
    for (std::size_t i = 0; i < per; ++i) ASSERT_EQ(f[t * per + i], f[i]);
}

TEST(Synth, DuplicateRatioHitsExactPruneCount) {
  SynthParams sp;
  sp.frames = 10;
  sp.channels = 3;
  sp.height = 20;
  sp.width = 20;
  sp.patch_size = 4;
  sp.rho = 0.6;
  sp.threshold = 0.1;
  const VisualMedia m = synth_media(SynthKind::DuplicateRatio, sp, 77);
  const std::size_t non_first = 9 * 25;
  EXPECT_EQ(brute_force_pruned(m, 4, 0.1), 135u);  // 0.6 * 225
  auto [g, rep] = prune(patchify(m, 4), PruneConfig{0.1});
  EXPECT_EQ(rep.pruned, 135u);
  EXPECT_DOUBLE_EQ(static_cast<double>(rep.pruned) / non_first, 0.6);
  // Same split under strictly-adjacent comparison, since fresh patches move
  // far from the previous frame.
  EXPECT_EQ(prune(patchify(m, 4), PruneConfig{0.1, PruneMode::Adjacent}).second.pruned, 135u);
}

TEST(Synth, RejectsInvalidRatio) {
  SynthParams sp;
  sp.rho = 1.2;
  EXPECT_THROW(synth_media(SynthKind::DuplicateRatio, sp, 0), ContractError);
  sp.rho = -0.1;
  EXPECT_THROW(synth_media(SynthKind::DuplicateRatio, sp, 0), ContractError);
  sp.rho = 0.5;
  sp.threshold = 0.0;
  EXPECT_THROW(synth_media(SynthKind::DuplicateRatio, sp, 0), ContractError);
}

TEST(Synth, DriftingBlobMoves) {
  SynthParams sp;
  sp.frames = 4;
  const VisualMedia m = synth_media(SynthKind::DriftingBlob, sp, 5);
  for (double v : m.frames().data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  const auto& f = m.frames();
  const std::size_t per = f.size() / 4;
  double diff = 0.0;
  for (std::size_t i = 0; i < per; ++i) diff += std::abs(f[per + i] - f[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(Modality, ParseRoundTrip) {
  for (auto m : {Modality::Image2D, Modality::Volume3D, Modality::Video}) EXPECT_EQ(parse_modality(to_string(m)), m);
  EXPECT_THROW(parse_modality("audio"), ConfigError);
}
