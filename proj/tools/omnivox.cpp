// omnivox: command-line front end for the unified visual tokenizer/encoder.
//
// Exit status is 0 on success. Any failure prints exactly one line
//   error: <code>: <message>
// to stderr and exits non-zero.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "omnivox/commands.hpp"

namespace {

using namespace omnivox;

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const std::string& code, const std::string& msg) {
  std::cerr << "error: " << code << ": " << one_line(msg) << '\n';
  return 1;
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
  RunConfig c;
  c.train.seed = fallback;
  apply_env(c);
  return c.train.seed;
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << j.dump(2) << '\n';
}

struct ConfigFlags {
  std::string config;
  std::string media;
  std::string modality;
  std::optional<std::size_t> patch_size;
  bool crop = false;
  std::optional<double> threshold;
  std::string mode;
  bool no_prune = false;
  std::optional<std::uint64_t> seed;
  std::string output_dir;

  void add_media(CLI::App* app) {
    app->add_option("--config", config, "RunConfig JSON file");
    app->add_option("--media", media, "media OMT file (overrides media.path)");
    app->add_option("--modality", modality, "image2d | volume3d | video");
    app->add_option("--patch-size", patch_size, "patch edge in pixels");
    app->add_flag("--crop", crop, "center-crop frames to a multiple of the patch size");
  }

  // defaults < config file < OMNIVOX_SEED < flags
  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    apply_env(c);
    if (!media.empty()) c.media.path = media;
    if (!modality.empty()) c.media.modality = parse_modality(modality);
    if (patch_size) c.media.patch_size = *patch_size;
    if (crop) c.media.crop = true;
    if (threshold) c.prune.config.threshold = *threshold;
    if (!mode.empty()) c.prune.config.mode = parse_prune_mode(mode);
    if (no_prune) c.prune.enabled = false;
    if (seed) c.train.seed = *seed;
    if (!output_dir.empty()) c.output_dir = output_dir;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omnivox: unified 2D/3D/video tokenizer, rotary encoder and token pruning"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic media as an OMT file");
  std::string synth_kind = "noise", synth_modality = "video", synth_out;
  SynthParams sp;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--kind", synth_kind, "noise | drifting-blob | duplicate-ratio")->capture_default_str();
  synth->add_option("--modality", synth_modality, "image2d | volume3d | video")->capture_default_str();
  synth->add_option("--frames", sp.frames)->capture_default_str();
  synth->add_option("--channels", sp.channels)->capture_default_str();
  synth->add_option("--height", sp.height)->capture_default_str();
  synth->add_option("--width", sp.width)->capture_default_str();
  synth->add_option("--rho", sp.rho, "duplicate-ratio: fraction of repeated patches")->capture_default_str();
  synth->add_option("--threshold", sp.threshold, "duplicate-ratio: distance threshold")->capture_default_str();
  synth->add_option("--patch-size", sp.patch_size)->capture_default_str();
  synth->add_option("--sigma", sp.sigma, "drifting-blob radius")->capture_default_str();
  synth->add_option("--vx", sp.velocity_x, "drifting-blob x drift per frame")->capture_default_str();
  synth->add_option("--vy", sp.velocity_y, "drifting-blob y drift per frame")->capture_default_str();
  synth->add_option("--seed", synth_seed, "RNG seed (default: OMNIVOX_SEED or 0)");
  synth->add_option("--out", synth_out, "output OMT path")->required();

  // tokenize
  auto* tokenize = app.add_subcommand("tokenize", "cut media into patch tokens with (t, h, w) positions");
  ConfigFlags tok_flags;
  std::string tok_out;
  tok_flags.add_media(tokenize);
  tokenize->add_option("--out", tok_out, "output prefix for .tokens.omt and .positions.omt")->required();

  // prune-stats
  auto* prune_stats = app.add_subcommand("prune-stats", "token reduction per threshold as JSON");
  ConfigFlags ps_flags;
  std::vector<double> ps_thresholds{0.0, 0.1, 0.3};
  std::string ps_out;
  ps_flags.add_media(prune_stats);
  prune_stats->add_option("--threshold,--thresholds", ps_thresholds, "ascending thresholds")->delimiter(',');
  prune_stats->add_option("--mode", ps_flags.mode, "running-reference | adjacent");
  prune_stats->add_option("--out", ps_out, "JSON output (default stdout)");

  // encode
  auto* encode = app.add_subcommand("encode", "encode media to a pooled embedding");
  ConfigFlags enc_flags;
  std::string enc_params, enc_out;
  enc_flags.add_media(encode);
  encode->add_option("--threshold", enc_flags.threshold, "pruning threshold");
  encode->add_option("--mode", enc_flags.mode, "running-reference | adjacent");
  encode->add_flag("--no-prune", enc_flags.no_prune, "disable pruning");
  encode->add_option("--seed", enc_flags.seed, "parameter init seed when --params is absent");
  encode->add_option("--params", enc_params, "parameter directory from train-toy");
  encode->add_option("--out", enc_out, "embedding OMT path; stats go to <out>.json")->required();

  // train-toy
  auto* train = app.add_subcommand("train-toy", "run the progressive three-stage toy trainer");
  ConfigFlags tr_flags;
  std::optional<std::size_t> tr_steps;
  std::optional<double> tr_lr;
  std::vector<int> tr_stages;
  train->add_option("--config", tr_flags.config, "RunConfig JSON file");
  train->add_option("--output-dir", tr_flags.output_dir, "where params and metrics.jsonl go");
  train->add_option("--seed", tr_flags.seed);
  train->add_option("--steps", tr_steps, "SGD steps per stage");
  train->add_option("--lr", tr_lr, "learning rate");
  train->add_option("--stages", tr_stages, "stages to run, e.g. 1,2,3")->delimiter(',');

  // bench
  auto* bench = app.add_subcommand("bench", "time prune + encode per threshold, CSV out");
  ConfigFlags b_flags;
  std::vector<double> b_thresholds{0.0, 0.1, 0.3};
  std::size_t b_repeats = 5;
  std::string b_params, b_out;
  b_flags.add_media(bench);
  bench->add_option("--thresholds", b_thresholds, "ascending thresholds")->delimiter(',');
  bench->add_option("--repeats", b_repeats, "timed runs per threshold (median reported)")->capture_default_str();
  bench->add_option("--mode", b_flags.mode, "running-reference | adjacent");
  bench->add_option("--seed", b_flags.seed);
  bench->add_option("--params", b_params, "parameter directory");
  bench->add_option("--out", b_out, "CSV output (default stdout)");

  // filter-captions
  auto* fc = app.add_subcommand("filter-captions", "score caption candidates and mark accepted ones");
  cmd::FilterCaptionsRequest fc_req;
  std::string fc_in, fc_out;
  fc->add_option("--in", fc_in, "JSON-lines input {media_id, text}")->required();
  fc->add_option("--out", fc_out, "JSON-lines output")->required();
  fc->add_option("--floor", fc_req.rule.floor, "minimum per-criterion score")->capture_default_str();
  fc->add_option("--mean", fc_req.rule.mean, "minimum mean score")->capture_default_str();
  fc->add_flag("--accepted-only", fc_req.accepted_only, "drop rejected candidates from the output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) {
      sp.modality = parse_modality(synth_modality);
      cmd::SynthRequest req{parse_synth_kind(synth_kind), sp, synth_seed.value_or(env_seed_or(0)), synth_out};
      std::cout << cmd::synth(req).dump() << '\n';
    } else if (tokenize->parsed()) {
      const RunConfig c = tok_flags.resolve();
      if (c.media.path.empty()) throw ConfigError("tokenize needs --media or media.path");
      std::cout << cmd::tokenize({c.media.path, c.media.modality, c.media.patch_size, c.media.crop, tok_out}).dump()
                << '\n';
    } else if (prune_stats->parsed()) {
      const RunConfig c = ps_flags.resolve();
      if (c.media.path.empty()) throw ConfigError("prune-stats needs --media or media.path");
      emit(cmd::prune_stats({c.media.path, c.media.modality, c.media.patch_size, c.media.crop, ps_thresholds,
                             c.prune.config.mode}),
           ps_out);
    } else if (encode->parsed()) {
      cmd::EncodeRequest req{enc_flags.resolve(), std::nullopt, enc_out};
      if (!enc_params.empty()) req.params_dir = enc_params;
      std::cout << cmd::encode(req).dump() << '\n';
    } else if (train->parsed()) {
      RunConfig c = tr_flags.resolve();
      if (tr_steps) c.train.steps = *tr_steps;
      if (tr_lr) c.train.lr = *tr_lr;
      if (!tr_stages.empty()) c.train.stages = tr_stages;
      std::cout << cmd::train_toy(c).dump() << '\n';
    } else if (bench->parsed()) {
      cmd::BenchRequest req{b_flags.resolve(), b_thresholds, b_repeats, std::nullopt};
      if (!b_params.empty()) req.params_dir = b_params;
      const std::string csv = cmd::bench_csv(cmd::bench(req));
      if (b_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream f(b_out);
        if (!f) throw IoError("cannot write " + b_out);
        f << csv;
      }
    } else if (fc->parsed()) {
      fc_req.in = fc_in;
      fc_req.out = fc_out;
      std::cout << cmd::filter_captions_file(fc_req).dump() << '\n';
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
