// SPDX-License-Identifier: Apache-2.0
//
// Trainable BEV class-logit grid anchored to a reference camera, plus the
// softmax/nearest-neighbour machinery used to sample it along rays.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rendbev/geometry.hpp"
#include "rendbev/raster.hpp"

namespace rendbev {

/// Metric layout of the grid. Row index grows with forward depth z, column
/// index with lateral x. Cells are square.
class BevSpec {
 public:
  BevSpec() = default;
  /// Throws ConfigError on non-positive sizes.
  BevSpec(int rows, int cols, double cell_size, double origin_x, double origin_z);

  /// Cell size depth_extent / rows; lateral extent must agree within 1%.
  /// Laterally centred on the camera, starting at z = origin_z.
  static BevSpec from_extents(int rows, int cols, double depth_extent, double lateral_extent,
                              double origin_z = 0.0);
  /// 128 x 128 cells over 25.6 m x 25.6 m.
  static BevSpec desk_default();
  /// 768 x 704 cells over 56.83 m x 52.096 m.
  static BevSpec full_scale();

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double cell_size() const { return cell_; }
  double origin_x() const { return origin_x_; }
  double origin_z() const { return origin_z_; }
  double depth_extent() const { return rows_ * cell_; }
  double lateral_extent() const { return cols_ * cell_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(rows_) * cols_; }

  friend bool operator==(const BevSpec&, const BevSpec&) = default;

 private:
  int rows_ = 1, cols_ = 1;
  double cell_ = 1.0, origin_x_ = 0.0, origin_z_ = 0.0;
};

struct CellRef {
  int row = 0;
  int col = 0;
  bool in_bounds = false;

  std::size_t index(const BevSpec& spec) const { return static_cast<std::size_t>(row) * spec.cols() + col; }
  friend bool operator==(const CellRef&, const CellRef&) = default;
};

/// Logits stored rows x cols x C, class index fastest.
struct BevGrid {
  BevSpec spec;
  int class_count = 0;
  std::vector<float> logits;

  BevGrid() = default;
  /// Zero-initialized. Throws ConfigError if class_count < 2.
  BevGrid(const BevSpec& spec, int class_count);

  float* cell(std::size_t idx) { return logits.data() + idx * class_count; }
  const float* cell(std::size_t idx) const { return logits.data() + idx * class_count; }
};

/// Per-cell class probabilities, same layout as BevGrid::logits.
struct ProbGrid {
  BevSpec spec;
  int class_count = 0;
  std::vector<double> probs;
  std::vector<double> uniform;  ///< 1/C fallback for out-of-bounds lookups

  std::span<const double> cell(std::size_t idx) const {
    return {probs.data() + idx * class_count, static_cast<std::size_t>(class_count)};
  }
};

ProbGrid softmax_probs(const BevGrid& g);
/// Same as above for a double-precision logit buffer laid out like BevGrid::logits.
ProbGrid softmax_probs(const BevSpec& spec, int class_count, std::span<const double> logits);

/// Nearest-cell addressing of reference-frame ground coordinates. Total.
CellRef world_to_cell(const BevSpec& spec, GroundPoint xz);
GroundPoint cell_center(const BevSpec& spec, int row, int col);

struct NearestSample {
  std::span<const double> probs;
  CellRef cell;
};
/// Probabilities of the containing cell, or the uniform vector when outside.
NearestSample sample_nearest(const ProbGrid& probs, GroundPoint xz);

/// Per-cell argmax over logits; ties go to the lowest class index.
LabelImage argmax_map(const BevGrid& g);

}  // namespace rendbev
