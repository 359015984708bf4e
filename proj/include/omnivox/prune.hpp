#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnivox/error.hpp"
#include "omnivox/media.hpp"
#include "omnivox/tensor.hpp"

namespace omnivox {

enum class PruneMode {
  RunningReference,  // compare against the last kept patch at the location
  Adjacent,          // compare against the immediately preceding frame
};

inline std::string_view to_string(PruneMode m) {
  return m == PruneMode::RunningReference ? "running-reference" : "adjacent";
}

inline PruneMode parse_prune_mode(std::string_view s) {
  if (s == "running-reference" || s == "running") return PruneMode::RunningReference;
  if (s == "adjacent") return PruneMode::Adjacent;
  throw ConfigError("unknown prune mode '" + std::string(s) + "' (expected running-reference, adjacent)");
}

struct PruneConfig {
  double threshold = 0.1;  // mean absolute pixel difference
  PruneMode mode = PruneMode::RunningReference;

  void validate() const {
    if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
      throw ConfigError("prune threshold must be a finite value >= 0");
    }
  }
};

struct PruneReport {
  double threshold = 0.0;
  PruneMode mode = PruneMode::RunningReference;
  Tensor distances;  // (T-1) x rows x cols; 1 x rows x cols of zeros when T == 1
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t pruned = 0;
  double reduction_ratio = 0.0;
  std::vector<std::size_t> per_frame_kept;
};

// Mean absolute elementwise difference.
inline double patch_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("patch_distance length mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  if (a.empty()) throw DimensionError("patch_distance on empty patches");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

namespace detail {

// Index of each (t, h, w) cell in storage order. Requires one token per cell.
inline std::vector<std::size_t> cell_index(const TokenGrid& g) {
  const auto& gs = g.grid;
  if (g.size() != gs.total()) {
    throw DimensionError("prune needs a full token grid: " + std::to_string(g.size()) + " tokens for " +
                         std::to_string(gs.total()) + " cells");
  }
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> idx(gs.total(), kUnset);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& p = g.positions[i];
    if (p.t >= gs.frames || p.h >= gs.rows || p.w >= gs.cols) {
      throw DimensionError("token position outside grid");
    }
    auto& slot = idx[(p.t * gs.rows + p.h) * gs.cols + p.w];
    if (slot != kUnset) throw DimensionError("duplicate token position in grid");
    slot = i;
  }
  return idx;
}

}  // namespace detail

// Marks token (t, h, w), t >= 1, dead iff its distance to the reference patch
// at (h, w) is strictly below the threshold. Frame 0 is always kept, tokens
// already dead stay dead, and storage order and positions are untouched.
inline std::pair<TokenGrid, PruneReport> prune(const TokenGrid& grid, const PruneConfig& cfg) {
  cfg.validate();
  const auto idx = detail::cell_index(grid);
  const auto& gs = grid.grid;
  TokenGrid out = grid;

  PruneReport rep;
  rep.threshold = cfg.threshold;
  rep.mode = cfg.mode;
  rep.total = grid.size();
  rep.distances = Tensor({std::max<std::size_t>(gs.frames, 2) - 1, gs.rows, gs.cols});
  rep.per_frame_kept.assign(gs.frames, 0);

  auto cell = [&](std::size_t t, std::size_t h, std::size_t w) { return idx[(t * gs.rows + h) * gs.cols + w]; };
  auto dist = rep.distances.data();

  for (std::size_t h = 0; h < gs.rows; ++h) {
    for (std::size_t w = 0; w < gs.cols; ++w) {
      std::size_t ref = cell(0, h, w);
      out.live[ref] = 1;
      for (std::size_t t = 1; t < gs.frames; ++t) {
        const std::size_t cur = cell(t, h, w);
        const std::size_t against = cfg.mode == PruneMode::Adjacent ? cell(t - 1, h, w) : ref;
        const double d = patch_distance(grid.tokens.row(cur), grid.tokens.row(against));
        dist[((t - 1) * gs.rows + h) * gs.cols + w] = d;
        if (grid.live[cur] && !(d < cfg.threshold)) {
          out.live[cur] = 1;
          ref = cur;
        } else {
          out.live[cur] = 0;
        }
      }
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.live[i]) ++rep.per_frame_kept[out.positions[i].t];
  }
  rep.kept = out.live_count();
  rep.pruned = rep.total - rep.kept;
  rep.reduction_ratio = rep.total ? static_cast<double>(rep.pruned) / static_cast<double>(rep.total) : 0.0;
  return {std::move(out), std::move(rep)};
}

// One report per threshold, each pruning the original grid independently.
inline std::vector<PruneReport> sweep(const TokenGrid& grid, std::span<const double> thresholds,
                                      PruneMode mode = PruneMode::RunningReference) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ContractError("sweep thresholds must be sorted ascending");
  }
  std::vector<PruneReport> out;
  out.reserve(thresholds.size());
  for (double tau : thresholds) out.push_back(prune(grid, PruneConfig{tau, mode}).second);
  return out;
}

inline nlohmann::json to_json(const PruneReport& r) {
  return nlohmann::json{
      {"threshold", r.threshold},
      {"mode", std::string(to_string(r.mode))},
      {"total", r.total},
      {"kept", r.kept},
      {"pruned", r.pruned},
      {"reduction_ratio", r.reduction_ratio},
      {"per_frame_kept", r.per_frame_kept},
  };
}

}  // namespace omnivox
