// SPDX-License-Identifier: Apache-2.0
#include "rendbev/bev_grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rendbev/error.hpp"

namespace rendbev {

BevSpec::BevSpec(int rows, int cols, double cell_size, double origin_x, double origin_z)
    : rows_(rows), cols_(cols), cell_(cell_size), origin_x_(origin_x), origin_z_(origin_z) {
  if (rows <= 0 || cols <= 0) throw ConfigError("bev spec: rows and cols must be positive");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("bev spec: cell size must be positive");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_z)) throw ConfigError("bev spec: origin must be finite");
}

BevSpec BevSpec::from_extents(int rows, int cols, double depth_extent, double lateral_extent, double origin_z) {
  if (rows <= 0 || cols <= 0 || !(depth_extent > 0.0) || !(lateral_extent > 0.0)) {
    throw ConfigError("bev spec: extents and cell counts must be positive");
  }
  const double cell = depth_extent / rows;
  const double lateral_cell = lateral_extent / cols;
  if (std::abs(cell - lateral_cell) > 0.01 * cell) {
    std::ostringstream os;
    os << "bev spec: cells are not square (" << cell << " m vs " << lateral_cell << " m)";
    throw ConfigError(os.str());
  }
  return BevSpec(rows, cols, cell, -0.5 * cols * cell, origin_z);
}

BevSpec BevSpec::desk_default() { return from_extents(128, 128, 25.6, 25.6); }

BevSpec BevSpec::full_scale() { return from_extents(768, 704, 56.83, 52.096); }

BevGrid::BevGrid(const BevSpec& s, int c) : spec(s), class_count(c) {
  if (c < 2) throw ConfigError("bev grid: at least two classes required");
  logits.assign(spec.cell_count() * static_cast<std::size_t>(c), 0.0f);
}

namespace {

template <typename T>
ProbGrid softmax_impl(const BevSpec& spec, int class_count, std::span<const T> logits) {
  ProbGrid out;
  out.spec = spec;
  out.class_count = class_count;
  out.probs.resize(logits.size());
  out.uniform.assign(class_count, 1.0 / class_count);
  const std::size_t n = spec.cell_count();
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data() + i * class_count;
    double* p = out.probs.data() + i * class_count;
    double zmax = static_cast<double>(z[0]);
    for (int c = 1; c < class_count; ++c) zmax = std::max(zmax, static_cast<double>(z[c]));
    double sum = 0.0;
    for (int c = 0; c < class_count; ++c) {
      p[c] = std::exp(static_cast<double>(z[c]) - zmax);
      sum += p[c];
    }
    for (int c = 0; c < class_count; ++c) p[c] /= sum;
  }
  return out;
}

}  // namespace

ProbGrid softmax_probs(const BevGrid& g) {
  return softmax_impl<float>(g.spec, g.class_count, g.logits);
}

ProbGrid softmax_probs(const BevSpec& spec, int class_count, std::span<const double> logits) {
  if (logits.size() != spec.cell_count() * static_cast<std::size_t>(class_count)) {
    throw ConfigError("softmax_probs: logit buffer does not match the grid shape");
  }
  return softmax_impl<double>(spec, class_count, logits);
}

CellRef world_to_cell(const BevSpec& spec, GroundPoint xz) {
  const double fr = std::floor((xz.z - spec.origin_z()) / spec.cell_size());
  const double fc = std::floor((xz.x - spec.origin_x()) / spec.cell_size());
  CellRef ref;
  ref.in_bounds = fr >= 0.0 && fc >= 0.0 && fr < spec.rows() && fc < spec.cols();
  if (ref.in_bounds) {
    ref.row = static_cast<int>(fr);
    ref.col = static_cast<int>(fc);
  } else {
    // Clamped indices keep the reference well-formed; callers must check in_bounds.
    ref.row = static_cast<int>(std::clamp(fr, -1.0, static_cast<double>(spec.rows())));
    ref.col = static_cast<int>(std::clamp(fc, -1.0, static_cast<double>(spec.cols())));
  }
  return ref;
}

GroundPoint cell_center(const BevSpec& spec, int row, int col) {
  return {spec.origin_x() + (col + 0.5) * spec.cell_size(), spec.origin_z() + (row + 0.5) * spec.cell_size()};
}

NearestSample sample_nearest(const ProbGrid& probs, GroundPoint xz) {
  const CellRef ref = world_to_cell(probs.spec, xz);
  if (!ref.in_bounds) return {probs.uniform, ref};
  return {probs.cell(ref.index(probs.spec)), ref};
}

LabelImage argmax_map(const BevGrid& g) {
  LabelImage out(g.spec.rows(), g.spec.cols(), 0);
  const std::size_t n = g.spec.cell_count();
  for (std::size_t i = 0; i < n; ++i) {
    const float* z = g.cell(i);
    int best = 0;
    for (int c = 1; c < g.class_count; ++c) {
      if (z[c] > z[best]) best = c;
    }
    out.data[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace rendbev
