// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace rendbev {

/// Row-major 2D array. Used for perspective images (rows = image height)
/// and for BEV label grids (row 0 = nearest depth band).
template <typename T>
struct Raster {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  bool same_shape(const Raster& o) const { return rows == o.rows && cols == o.cols; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

using LabelImage = Raster<std::uint8_t>;
using DepthImage = Raster<double>;
using MaskGrid = Raster<std::uint8_t>;

}  // namespace rendbev
