#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "omnivox/error.hpp"
#include "omnivox/media.hpp"
#include "omnivox/tensor.hpp"

namespace omnivox {

enum Axis : std::size_t { kAxisT = 0, kAxisH = 1, kAxisW = 2 };

// Axis-factored rotary embedding. The head is split into three contiguous
// blocks [t | h | w]; block a is rotated by position[a] in adjacent pairs.
struct RopeConfig {
  std::size_t head_dim = 64;
  std::array<std::size_t, 3> axis_dims{16, 24, 24};
  double base = 10000.0;

  // Roughly 1/4 of the head on the slice/frame axis, the rest split evenly
  // between rows and columns, all blocks even.
  static RopeConfig for_head_dim(std::size_t d, double base = 10000.0) {
    if (d == 0 || d % 2 != 0) throw ConfigError("head_dim must be a positive even integer");
    std::size_t dt = (d / 4) & ~std::size_t{1};
    std::size_t rest = d - dt;
    std::size_t dh = (rest / 2) & ~std::size_t{1};
    std::size_t dw = rest - dh;
    return RopeConfig{d, {dt, dh, dw}, base};
  }

  void validate() const {
    if (head_dim == 0 || head_dim % 2 != 0) {
      throw ConfigError("rope head_dim must be a positive even integer, got " + std::to_string(head_dim));
    }
    for (auto a : axis_dims) {
      if (a % 2 != 0) throw ConfigError("rope axis dims must be even");
    }
    if (axis_dims[0] + axis_dims[1] + axis_dims[2] != head_dim) {
      throw ConfigError("rope axis dims must sum to head_dim " + std::to_string(head_dim));
    }
    if (!(base > 0.0) || !std::isfinite(base)) throw ConfigError("rope base must be positive");
  }
};

// Per-axis angular frequencies: theta[a][i] = base^(-2i / d_a).
struct AxisFrequencies {
  std::array<std::vector<double>, 3> theta;
};

inline AxisFrequencies frequencies(const RopeConfig& cfg) {
  cfg.validate();
  AxisFrequencies f;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t da = cfg.axis_dims[a];
    f.theta[a].resize(da / 2);
    for (std::size_t i = 0; i < da / 2; ++i) {
      f.theta[a][i] = std::pow(cfg.base, -2.0 * static_cast<double>(i) / static_cast<double>(da));
    }
  }
  return f;
}

inline std::array<std::size_t, 3> position_coords(const Position& p) { return {p.t, p.h, p.w}; }

// [x', y'] = [[cos a, -sin a], [sin a, cos a]] [x, y]
inline std::array<double, 2> rotate_pair(double x, double y, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * x - s * y, s * x + c * y};
}

// Rotates vec in place. Zero-angle pairs are skipped, so the origin is an
// exact identity.
inline void rotate_inplace(std::span<double> vec, const Position& pos, const RopeConfig& cfg,
                           const AxisFrequencies& freqs) {
  if (vec.size() != cfg.head_dim) {
    throw DimensionError("rotate: vector length " + std::to_string(vec.size()) + " != head_dim " +
                         std::to_string(cfg.head_dim));
  }
  const auto coords = position_coords(pos);
  std::size_t offset = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const double m = static_cast<double>(coords[a]);
    if (coords[a] != 0) {
      for (std::size_t i = 0; i < freqs.theta[a].size(); ++i) {
        const auto r = rotate_pair(vec[offset + 2 * i], vec[offset + 2 * i + 1], m * freqs.theta[a][i]);
        vec[offset + 2 * i] = r[0];
        vec[offset + 2 * i + 1] = r[1];
      }
    }
    offset += cfg.axis_dims[a];
  }
}

// Transpose of rotate_inplace (rotation by the negated angles); used by the
// backward pass.
inline void unrotate_inplace(std::span<double> vec, const Position& pos, const RopeConfig& cfg,
                             const AxisFrequencies& freqs) {
  const auto coords = position_coords(pos);
  std::size_t offset = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const double m = static_cast<double>(coords[a]);
    if (coords[a] != 0) {
      for (std::size_t i = 0; i < freqs.theta[a].size(); ++i) {
        const auto r = rotate_pair(vec[offset + 2 * i], vec[offset + 2 * i + 1], -m * freqs.theta[a][i]);
        vec[offset + 2 * i] = r[0];
        vec[offset + 2 * i + 1] = r[1];
      }
    }
    offset += cfg.axis_dims[a];
  }
}

inline Tensor rotate(const Tensor& vec, const Position& pos, const RopeConfig& cfg) {
  if (vec.rank() != 1) throw DimensionError("rotate expects a vector, got " + shape_str(vec.shape()));
  Tensor out = vec;
  rotate_inplace(out.data(), pos, cfg, frequencies(cfg));
  return out;
}

// Rotates every row of an N x d matrix by its own position.
inline Tensor rotate_rows(const Tensor& x, std::span<const Position> positions, const RopeConfig& cfg,
                          const AxisFrequencies& freqs) {
  require_matrix(x, "rotate_rows input");
  if (x.extent(0) != positions.size()) {
    throw DimensionError("rotate_rows: " + std::to_string(x.extent(0)) + " rows but " +
                         std::to_string(positions.size()) + " positions");
  }
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) rotate_inplace(out.row(r), positions[r], cfg, freqs);
  return out;
}

// scores[m][n] = rotate(q_m, pos_m) . rotate(k_n, pos_n) / sqrt(d)
inline Tensor rope_scores(const Tensor& q, const Tensor& k, std::span<const Position> positions,
                          const RopeConfig& cfg) {
  require_matrix(q, "rope_scores q");
  require_matrix(k, "rope_scores k");
  if (q.shape() != k.shape()) {
    throw DimensionError("rope_scores q/k shape mismatch: " + shape_str(q.shape()) + " vs " +
                         shape_str(k.shape()));
  }
  const auto freqs = frequencies(cfg);
  const Tensor qr = rotate_rows(q, positions, cfg, freqs);
  const Tensor kr = rotate_rows(k, positions, cfg, freqs);
  const std::size_t n = q.extent(0);
  const double inv = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  Tensor s({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = dot(qr.row(i), kr.row(j)) * inv;
  return s;
}

}  // namespace omnivox
