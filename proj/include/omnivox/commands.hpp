#pragma once

// Command implementations behind tools/omnivox. Each returns its JSON summary
// and writes its artifacts, so tests can drive them without a subprocess.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnivox/captions.hpp"
#include "omnivox/encoder.hpp"
#include "omnivox/media.hpp"
#include "omnivox/omt.hpp"
#include "omnivox/prune.hpp"
#include "omnivox/rope.hpp"
#include "omnivox/run_config.hpp"
#include "omnivox/trainer.hpp"

namespace omnivox::cmd {

namespace fs = std::filesystem;
using nlohmann::json;

inline VisualMedia load_media(const fs::path& path, Modality modality, std::size_t patch_size, bool crop) {
  Tensor frames = load_omt(path);
  VisualMedia media(modality, std::move(frames));
  return crop ? center_crop(media, patch_size) : media;
}

inline json grid_json(const TokenGrid& g) {
  return {{"modality", std::string(to_string(g.modality))},
          {"frames", g.grid.frames},
          {"rows", g.grid.rows},
          {"cols", g.grid.cols},
          {"patch_size", g.patch_size},
          {"tokens", g.size()},
          {"patch_dim", g.patch_dim()}};
}

struct SynthRequest {
  SynthKind kind = SynthKind::Noise;
  SynthParams params;
  std::uint64_t seed = 0;
  fs::path out;
};

inline json synth(const SynthRequest& req) {
  const VisualMedia media = synth_media(req.kind, req.params, req.seed);
  save_omt(media.frames(), req.out);
  return {{"out", req.out.string()}, {"shape", media.frames().shape()}, {"seed", req.seed}};
}

struct TokenizeRequest {
  fs::path media;
  Modality modality = Modality::Video;
  std::size_t patch_size = 4;
  bool crop = false;
  fs::path out_prefix;
};

// Writes <prefix>.tokens.omt (N x C*p*p) and <prefix>.positions.omt (N x 3).
inline json tokenize(const TokenizeRequest& req) {
  const TokenGrid g = patchify(load_media(req.media, req.modality, req.patch_size, req.crop), req.patch_size);
  Tensor pos({g.size(), 3});
  for (std::size_t i = 0; i < g.size(); ++i) {
    pos(i, 0) = static_cast<double>(g.positions[i].t);
    pos(i, 1) = static_cast<double>(g.positions[i].h);
    pos(i, 2) = static_cast<double>(g.positions[i].w);
  }
  const fs::path tok = req.out_prefix.string() + ".tokens.omt";
  const fs::path pp = req.out_prefix.string() + ".positions.omt";
  save_omt(g.tokens, tok);
  save_omt(pos, pp);
  json j = grid_json(g);
  j["tokens_file"] = tok.string();
  j["positions_file"] = pp.string();
  return j;
}

struct PruneStatsRequest {
  fs::path media;
  Modality modality = Modality::Video;
  std::size_t patch_size = 4;
  bool crop = false;
  std::vector<double> thresholds{0.0, 0.1, 0.3};
  PruneMode mode = PruneMode::RunningReference;
};

inline json prune_stats(const PruneStatsRequest& req) {
  const TokenGrid g = patchify(load_media(req.media, req.modality, req.patch_size, req.crop), req.patch_size);
  json reports = json::array();
  for (const auto& r : sweep(g, req.thresholds, req.mode)) reports.push_back(to_json(r));
  return {{"grid", grid_json(g)}, {"reports", reports}};
}

inline EncoderParams params_for(const RunConfig& cfg, std::size_t patch_dim, const std::optional<fs::path>& params_dir) {
  if (params_dir) {
    EncoderParams p = load_params(*params_dir);
    if (p.config.patch_dim != patch_dim) {
      throw DimensionError("params expect patch_dim " + std::to_string(p.config.patch_dim) + ", media gives " +
                           std::to_string(patch_dim));
    }
    return p;
  }
  return EncoderParams::init(cfg.encoder_config(patch_dim), cfg.train.seed);
}

struct EncodeRequest {
  RunConfig config;
  std::optional<fs::path> params_dir;
  fs::path out;  // embedding OMT; stats go to <out>.json
};

inline json encode(const EncodeRequest& req) {
  const auto& cfg = req.config;
  if (cfg.media.path.empty()) throw ConfigError("encode needs media.path");
  const VisualMedia media = load_media(cfg.media.path, cfg.media.modality, cfg.media.patch_size, cfg.media.crop);
  TokenGrid grid = patchify(media, cfg.media.patch_size);
  const EncoderParams params = params_for(cfg, grid.patch_dim(), req.params_dir);
  const RopeConfig rope = cfg.rope_config();

  json stats = {{"grid", grid_json(grid)}};
  if (cfg.prune.enabled) {
    auto [pg, rep] = prune(grid, cfg.prune.config);
    grid = std::move(pg);
    stats["prune"] = to_json(rep);
  }
  ForwardStats fwd;
  const Tensor emb = forward(params, grid, rope, &fwd);
  save_omt(emb, req.out);
  stats["live_tokens"] = fwd.live_tokens;
  stats["attention_maps"] = fwd.attention_maps;
  stats["score_entries"] = fwd.score_entries;
  stats["embedding_file"] = req.out.string();
  std::ofstream(req.out.string() + ".json") << stats.dump(2) << '\n';
  return stats;
}

// Writes <output_dir>/params (final), <output_dir>/params_stage<k> and
// <output_dir>/metrics.jsonl.
inline json train_toy(const RunConfig& cfg) {
  cfg.validate();
  TrainSetup setup;
  setup.data = cfg.train.data;
  setup.encoder = cfg.encoder_config(setup.data.patch_dim());
  setup.rope = cfg.rope_config();
  const auto stages = cfg.stage_configs();

  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const EncoderParams init = EncoderParams::init(setup.encoder, cfg.train.seed);
  save_params(init, out / "params_init");
  const TrainResult res = train_progressive(init, stages, setup);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    save_params(res.after_stage[i], out / ("params_stage" + std::to_string(stages[i].stage)));
  }
  save_params(res.params, out / "params");
  {
    std::ofstream m(out / "metrics.jsonl");
    if (!m) throw IoError("cannot write metrics.jsonl in " + out.string());
    write_jsonl(m, res.log);
  }
  json summary = {{"output_dir", out.string()}, {"steps_logged", res.log.size()}};
  json per_stage = json::array();
  for (const auto& s : stages) {
    double first = 0.0, last = 0.0;
    bool seen = false;
    for (const auto& r : res.log) {
      if (r.stage != s.stage) continue;
      if (!seen) first = r.loss;
      seen = true;
      last = r.loss;
    }
    per_stage.push_back({{"stage", s.stage}, {"initial_loss", first}, {"final_loss", last}});
  }
  summary["stages"] = per_stage;
  return summary;
}

struct BenchRow {
  double threshold = 0.0;
  std::size_t tokens_kept = 0;
  std::size_t score_entries = 0;  // per attention map
  double wall_ms = 0.0;           // median over repeats of prune + forward
};

struct BenchRequest {
  RunConfig config;
  std::vector<double> thresholds{0.0, 0.1, 0.3};
  std::size_t repeats = 5;
  std::optional<fs::path> params_dir;
};

inline std::vector<BenchRow> bench(const BenchRequest& req) {
  const auto& cfg = req.config;
  if (cfg.media.path.empty()) throw ConfigError("bench needs media.path");
  if (req.repeats == 0) throw ConfigError("bench repeats must be positive");
  if (!std::is_sorted(req.thresholds.begin(), req.thresholds.end())) {
    throw ContractError("bench thresholds must be sorted ascending");
  }
  const VisualMedia media = load_media(cfg.media.path, cfg.media.modality, cfg.media.patch_size, cfg.media.crop);
  const TokenGrid grid = patchify(media, cfg.media.patch_size);
  const EncoderParams params = params_for(cfg, grid.patch_dim(), req.params_dir);
  const RopeConfig rope = cfg.rope_config();

  std::vector<BenchRow> rows;
  for (double tau : req.thresholds) {
    BenchRow row;
    row.threshold = tau;
    std::vector<double> times;
    for (std::size_t r = 0; r < req.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      auto [pg, rep] = prune(grid, PruneConfig{tau, cfg.prune.config.mode});
      ForwardStats st;
      const Tensor emb = forward(params, pg, rope, &st);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (st.attention_maps == 0 || st.score_entries % st.attention_maps != 0) {
        throw ContractError("score counter is not a whole number of attention maps");
      }
      row.tokens_kept = rep.kept;
      row.score_entries = st.score_entries / st.attention_maps;
      (void)emb;
    }
    std::sort(times.begin(), times.end());
    const std::size_t m = times.size();
    row.wall_ms = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
    rows.push_back(row);
  }
  return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "threshold,tokens_kept,score_entries,wall_ms\n";
  for (const auto& r : rows) os << r.threshold << ',' << r.tokens_kept << ',' << r.score_entries << ',' << r.wall_ms << '\n';
  return os.str();
}

struct FilterCaptionsRequest {
  fs::path in;
  fs::path out;
  AcceptRule rule;
  bool accepted_only = false;
};

inline json filter_captions_file(const FilterCaptionsRequest& req) {
  std::ifstream in(req.in);
  if (!in) throw IoError("cannot open " + req.in.string());
  auto caps = filter_captions(read_captions_jsonl(in), req.rule, MockScorer{});
  const std::size_t total = caps.size();
  const auto accepted = static_cast<std::size_t>(
      std::count_if(caps.begin(), caps.end(), [](const CandidateCaption& c) { return c.accepted; }));
  if (req.accepted_only) std::erase_if(caps, [](const CandidateCaption& c) { return !c.accepted; });
  std::ofstream out(req.out);
  if (!out) throw IoError("cannot write " + req.out.string());
  write_captions_jsonl(out, caps);
  return {{"total", total}, {"accepted", accepted}, {"out", req.out.string()}};
}

}  // namespace omnivox::cmd
