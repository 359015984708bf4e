#pragma once

// RunConfig: the JSON document every CLI command reads. Defaults live here and
// only here:
//
//   section   key              default               notes
//   media     path             ""                    OMT file, T x C x H x W
//             modality         "video"               image2d | volume3d | video
//             patch_size       4
//             crop             false                 center-crop to a multiple of patch_size
//   rope      head_dim         encoder.dim / heads   must match when given
//             axis_dims        ~[d/4, 3d/8, 3d/8]    even, sums to head_dim
//             base             10000
//   prune     threshold        0.1                   mean |pixel difference|
//             mode             "running-reference"   | "adjacent"
//             enabled          true                  encode/bench only
//   encoder   layers 2, dim 32, heads 1, d_out 16, mlp_ratio 4
//   train     stages           [1, 2, 3]
//             steps            40                    per stage
//             lr               0.05
//             seed             0                     OMNIVOX_SEED overrides
//             data             DataSpec defaults     items_per_stage, frames, height,
//                                                    width, channels, patch_size, rho,
//                                                    rho_threshold, modality_weights
//   output_dir                 "omnivox-out"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnivox/encoder.hpp"
#include "omnivox/error.hpp"
#include "omnivox/media.hpp"
#include "omnivox/prune.hpp"
#include "omnivox/rope.hpp"
#include "omnivox/trainer.hpp"

namespace omnivox {

struct MediaSection {
  std::string path;
  Modality modality = Modality::Video;
  std::size_t patch_size = 4;
  bool crop = false;
};

struct RopeSection {
  std::optional<std::size_t> head_dim;
  std::optional<std::array<std::size_t, 3>> axis_dims;
  double base = 10000.0;
};

struct PruneSection {
  PruneConfig config;
  bool enabled = true;
};

struct EncoderSection {
  std::size_t layers = 2;
  std::size_t dim = 32;
  std::size_t heads = 1;
  std::size_t d_out = 16;
  std::size_t mlp_ratio = 4;
};

struct TrainSection {
  std::vector<int> stages{1, 2, 3};
  std::size_t steps = 40;
  double lr = 0.05;
  std::uint64_t seed = 0;
  DataSpec data;
};

struct RunConfig {
  MediaSection media;
  RopeSection rope;
  PruneSection prune;
  EncoderSection encoder;
  TrainSection train;
  std::string output_dir = "omnivox-out";

  EncoderConfig encoder_config(std::size_t patch_dim) const {
    EncoderConfig c;
    c.patch_dim = patch_dim;
    c.dim = encoder.dim;
    c.layers = encoder.layers;
    c.heads = encoder.heads;
    c.d_out = encoder.d_out;
    c.mlp_ratio = encoder.mlp_ratio;
    c.validate();
    return c;
  }

  RopeConfig rope_config() const {
    if (encoder.heads == 0 || encoder.dim % encoder.heads != 0) {
      throw ConfigError("encoder.dim must be divisible by encoder.heads");
    }
    const std::size_t hd = encoder.dim / encoder.heads;
    if (rope.head_dim && *rope.head_dim != hd) {
      throw ConfigError("rope.head_dim " + std::to_string(*rope.head_dim) + " != encoder.dim / encoder.heads = " +
                        std::to_string(hd));
    }
    RopeConfig r = RopeConfig::for_head_dim(hd, rope.base);
    if (rope.axis_dims) r.axis_dims = *rope.axis_dims;
    r.validate();
    return r;
  }

  std::vector<StageConfig> stage_configs() const {
    std::vector<StageConfig> out;
    for (int s : train.stages) {
      out.push_back(StageConfig::standard(s, train.steps, train.lr, mix_seed(train.seed, static_cast<std::uint64_t>(s)),
                                          prune.config));
    }
    check_stage_order(out);
    return out;
  }

  void validate() const {
    if (media.patch_size == 0) throw ConfigError("media.patch_size must be positive");
    prune.config.validate();
    (void)rope_config();
    (void)encoder_config(1);
    if (train.steps == 0) throw ConfigError("train.steps must be positive");
    if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (train.data.patch_size == 0 || train.data.height % train.data.patch_size != 0 ||
        train.data.width % train.data.patch_size != 0) {
      throw ConfigError("train.data height/width must be divisible by its patch_size");
    }
    if (train.data.channels != 1 && train.data.channels != 3) throw ConfigError("train.data.channels must be 1 or 3");
    if (train.data.frames < 2) throw ConfigError("train.data.frames must be at least 2");
    (void)stage_configs();
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read_opt(const nlohmann::json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad type for " + where + "." + key);
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  using detail::reject_unknown;
  RunConfig c;
  reject_unknown(j, {"media", "rope", "prune", "encoder", "train", "output_dir"}, "config");

  if (j.contains("media")) {
    const auto& m = j["media"];
    reject_unknown(m, {"path", "modality", "patch_size", "crop"}, "media");
    read_opt(m, "path", c.media.path, "media");
    if (m.contains("modality")) c.media.modality = parse_modality(m["modality"].get<std::string>());
    read_opt(m, "patch_size", c.media.patch_size, "media");
    read_opt(m, "crop", c.media.crop, "media");
  }
  if (j.contains("rope")) {
    const auto& r = j["rope"];
    reject_unknown(r, {"head_dim", "axis_dims", "base"}, "rope");
    if (r.contains("head_dim")) c.rope.head_dim = r["head_dim"].get<std::size_t>();
    if (r.contains("axis_dims")) {
      const auto dims = r["axis_dims"].get<std::vector<std::size_t>>();
      if (dims.size() != 3) throw ConfigError("rope.axis_dims must have 3 entries (t, h, w)");
      c.rope.axis_dims = std::array<std::size_t, 3>{dims[0], dims[1], dims[2]};
    }
    read_opt(r, "base", c.rope.base, "rope");
  }
  if (j.contains("prune")) {
    const auto& p = j["prune"];
    reject_unknown(p, {"threshold", "mode", "enabled"}, "prune");
    read_opt(p, "threshold", c.prune.config.threshold, "prune");
    if (p.contains("mode")) c.prune.config.mode = parse_prune_mode(p["mode"].get<std::string>());
    read_opt(p, "enabled", c.prune.enabled, "prune");
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    reject_unknown(e, {"layers", "dim", "heads", "d_out", "mlp_ratio"}, "encoder");
    read_opt(e, "layers", c.encoder.layers, "encoder");
    read_opt(e, "dim", c.encoder.dim, "encoder");
    read_opt(e, "heads", c.encoder.heads, "encoder");
    read_opt(e, "d_out", c.encoder.d_out, "encoder");
    read_opt(e, "mlp_ratio", c.encoder.mlp_ratio, "encoder");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, {"stages", "steps", "lr", "seed", "data"}, "train");
    read_opt(t, "stages", c.train.stages, "train");
    read_opt(t, "steps", c.train.steps, "train");
    read_opt(t, "lr", c.train.lr, "train");
    read_opt(t, "seed", c.train.seed, "train");
    if (t.contains("data")) {
      const auto& d = t["data"];
      reject_unknown(d,
                     {"items_per_stage", "frames", "height", "width", "channels", "patch_size", "rho", "rho_threshold",
                      "modality_weights", "target_scale"},
                     "train.data");
      auto& ds = c.train.data;
      read_opt(d, "items_per_stage", ds.items_per_stage, "train.data");
      read_opt(d, "frames", ds.frames, "train.data");
      read_opt(d, "height", ds.height, "train.data");
      read_opt(d, "width", ds.width, "train.data");
      read_opt(d, "channels", ds.channels, "train.data");
      read_opt(d, "patch_size", ds.patch_size, "train.data");
      read_opt(d, "rho", ds.rho, "train.data");
      read_opt(d, "rho_threshold", ds.rho_threshold, "train.data");
      read_opt(d, "target_scale", ds.target_scale, "train.data");
      if (d.contains("modality_weights")) {
        const auto w = d["modality_weights"].get<std::vector<double>>();
        if (w.size() != 3) throw ConfigError("train.data.modality_weights must have 3 entries");
        ds.modality_weights = {w[0], w[1], w[2]};
      }
    }
  }
  read_opt(j, "output_dir", c.output_dir, "config");
  return c;
}

// Applies OMNIVOX_SEED, if set, on top of the file's train.seed.
inline void apply_env(RunConfig& c) {
  if (const char* s = std::getenv("OMNIVOX_SEED"); s && *s) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used != std::string(s).size()) throw std::invalid_argument("trailing");
      c.train.seed = v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("OMNIVOX_SEED is not an unsigned integer: ") + s);
    }
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace omnivox
