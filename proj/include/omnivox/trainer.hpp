#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "omnivox/encoder.hpp"
#include "omnivox/media.hpp"
#include "omnivox/prune.hpp"
#include "omnivox/random.hpp"

namespace omnivox {

struct ModalitySet {
  bool image = false;
  bool volume = false;
  bool video = false;

  static ModalitySet images_only() { return {true, false, false}; }
  static ModalitySet all() { return {true, true, true}; }

  bool contains(Modality m) const {
    switch (m) {
      case Modality::Image2D: return image;
      case Modality::Volume3D: return volume;
      case Modality::Video: return video;
    }
    return false;
  }
  friend bool operator==(const ModalitySet&, const ModalitySet&) = default;
};

// One phase of progressive training:
//   1: align, backbone frozen, images only, no pruning
//   2: everything trainable, images only, no pruning
//   3: everything trainable, all modalities, pruning on
struct StageConfig {
  int stage = 1;
  GroupSet trainable;
  ModalitySet modalities;
  std::optional<PruneConfig> pruning;
  std::size_t steps = 40;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;

  static StageConfig standard(int stage, std::size_t steps, double lr, std::uint64_t seed,
                              PruneConfig prune = PruneConfig{}) {
    StageConfig s;
    s.stage = stage;
    s.steps = steps;
    s.learning_rate = lr;
    s.seed = seed;
    switch (stage) {
      case 1:
        s.trainable = {true, true, false};
        s.modalities = ModalitySet::images_only();
        break;
      case 2:
        s.trainable = GroupSet::all();
        s.modalities = ModalitySet::images_only();
        break;
      case 3:
        s.trainable = GroupSet::all();
        s.modalities = ModalitySet::all();
        s.pruning = prune;
        break;
      default: throw StageOrderError("stage must be 1, 2 or 3, got " + std::to_string(stage));
    }
    return s;
  }

  void validate() const {
    const StageConfig ref = standard(stage, steps, learning_rate, seed);
    if (!(trainable == ref.trainable)) {
      throw ConfigError("stage " + std::to_string(stage) + " has the wrong trainable groups");
    }
    if (!(modalities == ref.modalities)) {
      throw ConfigError("stage " + std::to_string(stage) + " has the wrong modality set");
    }
    if (pruning.has_value() != ref.pruning.has_value()) {
      throw ConfigError(stage == 3 ? "stage 3 requires pruning" : "stages 1 and 2 run without pruning");
    }
    if (pruning) pruning->validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  }
};

// Synthetic regression data. Images are drifting-blob stills; volumes and
// videos use the constructed duplicate-ratio generator.
struct DataSpec {
  std::size_t items_per_stage = 6;
  std::array<double, 3> modality_weights{1.0, 1.0, 1.0};  // image, volume, video
  std::size_t frames = 6;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::size_t patch_size = 4;
  double rho = 0.6;
  double rho_threshold = 0.1;
  double target_scale = 0.5;

  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
};

struct MetricRecord {
  std::size_t step = 0;  // global step across stages
  int stage = 0;
  double loss = 0.0;
  std::optional<double> reduction_ratio;  // stage 3: over items with T > 1
};

inline nlohmann::json to_json(const MetricRecord& m) {
  nlohmann::json j = {{"step", m.step}, {"stage", m.stage}, {"loss", m.loss}};
  j["reduction_ratio"] = m.reduction_ratio ? nlohmann::json(*m.reduction_ratio) : nlohmann::json(nullptr);
  return j;
}

inline void write_jsonl(std::ostream& os, std::span<const MetricRecord> log) {
  for (const auto& m : log) os << to_json(m).dump() << '\n';
}

struct StageDataset {
  std::vector<Example> examples;
  std::optional<double> reduction_ratio;
};

// Teacher target: a fixed random map of the mean raw patch, squashed.
inline Tensor teacher_target(const TokenGrid& grid, const Tensor& teacher, double scale) {
  const std::size_t d = grid.patch_dim();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto r = grid.tokens.row(i);
    for (std::size_t c = 0; c < d; ++c) mean[c] += r[c];
  }
  for (auto& v : mean) v /= static_cast<double>(grid.size());
  Tensor out({teacher.extent(0)});
  for (std::size_t o = 0; o < out.size(); ++o) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += teacher(o, c) * (mean[c] - 0.5);
    out[o] = scale * std::tanh(s);
  }
  return out;
}

inline StageDataset build_stage_dataset(const StageConfig& stage, const DataSpec& spec, std::size_t d_out,
                                        std::uint64_t seed) {
  Rng teacher_rng(mix_seed(seed, 0x7eac));
  Tensor teacher({d_out, spec.patch_dim()});
  for (auto& v : teacher.data()) v = teacher_rng.normal() * 2.0;

  constexpr std::array<Modality, 3> kOrder{Modality::Image2D, Modality::Volume3D, Modality::Video};
  double wsum = 0.0;
  for (std::size_t m = 0; m < 3; ++m) {
    if (stage.modalities.contains(kOrder[m])) wsum += spec.modality_weights[m];
  }
  if (!(wsum > 0.0)) throw ConfigError("modality weights for the active modalities sum to zero");

  StageDataset ds;
  std::size_t pruned = 0, total = 0;
  std::size_t item = 0;
  for (std::size_t m = 0; m < 3; ++m) {
    const Modality mod = kOrder[m];
    if (!stage.modalities.contains(mod)) continue;
    const auto count = static_cast<std::size_t>(
        std::llround(static_cast<double>(spec.items_per_stage) * spec.modality_weights[m] / wsum));
    for (std::size_t i = 0; i < count; ++i, ++item) {
      SynthParams sp;
      sp.modality = mod;
      sp.frames = mod == Modality::Image2D ? 1 : spec.frames;
      sp.channels = spec.channels;
      sp.height = spec.height;
      sp.width = spec.width;
      sp.patch_size = spec.patch_size;
      sp.rho = spec.rho;
      sp.threshold = spec.rho_threshold;
      const std::uint64_t s = mix_seed(seed, 1000 * static_cast<std::uint64_t>(stage.stage) + item);
      const VisualMedia media = mod == Modality::Image2D ? synth_media(SynthKind::DriftingBlob, sp, s)
                                                         : synth_media(SynthKind::DuplicateRatio, sp, s);
      TokenGrid grid = patchify(media, spec.patch_size);
      Tensor target = teacher_target(grid, teacher, spec.target_scale);
      if (stage.pruning) {
        auto [pg, rep] = prune(grid, *stage.pruning);
        if (grid.grid.frames > 1) {
          pruned += rep.pruned;
          total += rep.total;
        }
        grid = compact(pg);
      }
      ds.examples.push_back({std::move(grid), std::move(target)});
    }
  }
  if (ds.examples.empty()) throw ConfigError("stage dataset is empty; raise items_per_stage");
  if (stage.pruning && total > 0) ds.reduction_ratio = static_cast<double>(pruned) / static_cast<double>(total);
  return ds;
}

struct TrainSetup {
  EncoderConfig encoder;
  RopeConfig rope;
  DataSpec data;
};

struct TrainResult {
  EncoderParams params;
  std::vector<MetricRecord> log;
  std::vector<EncoderParams> after_stage;  // snapshot at the end of each stage
};

inline void sgd_step(EncoderParams& params, const EncoderParams& grads, double lr, GroupSet trainable) {
  auto p = tensors_of(params);
  auto g = tensors_of(grads);
  std::size_t i = 0;
  params.for_each([&](const std::string&, ParamGroup group, Tensor&) {
    if (trainable.contains(group)) {
      auto pd = p[i]->data();
      auto gd = g[i]->data();
      for (std::size_t k = 0; k < pd.size(); ++k) pd[k] -= lr * gd[k];
    }
    ++i;
  });
}

inline void check_stage_order(std::span<const StageConfig> stages) {
  if (stages.empty()) throw StageOrderError("no stages given");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i > 0 && stages[i].stage <= stages[i - 1].stage) {
      throw StageOrderError("stages must run in increasing order 1, 2, 3; got stage " +
                            std::to_string(stages[i].stage) + " after stage " + std::to_string(stages[i - 1].stage));
    }
    stages[i].validate();
  }
}

// Plain SGD over a fixed per-stage dataset; each logged loss is the full-batch
// loss before that step's update.
inline TrainResult train_progressive(EncoderParams params, std::span<const StageConfig> stages, const TrainSetup& setup) {
  check_stage_order(stages);
  setup.encoder.validate();
  setup.encoder.check_rope(setup.rope);
  if (setup.data.patch_dim() != params.config.patch_dim) {
    throw ConfigError("data patch_dim " + std::to_string(setup.data.patch_dim()) + " != encoder patch_dim " +
                      std::to_string(params.config.patch_dim));
  }
  TrainResult res;
  std::size_t global = 0;
  for (const auto& stage : stages) {
    const StageDataset ds = build_stage_dataset(stage, setup.data, params.config.d_out, stage.seed);
    for (std::size_t s = 0; s < stage.steps; ++s, ++global) {
      auto lg = loss_and_grads(params, ds.examples, setup.rope, stage.trainable);
      res.log.push_back({global, stage.stage, lg.loss, ds.reduction_ratio});
      sgd_step(params, lg.grads, stage.learning_rate, stage.trainable);
    }
    res.log.push_back({global, stage.stage, batch_loss(params, ds.examples, setup.rope), ds.reduction_ratio});
    res.after_stage.push_back(params);
  }
  res.params = std::move(params);
  return res;
}

inline TrainResult train_progressive(std::span<const StageConfig> stages, const TrainSetup& setup, std::uint64_t seed) {
  return train_progressive(EncoderParams::init(setup.encoder, seed), stages, setup);
}

}  // namespace omnivox
