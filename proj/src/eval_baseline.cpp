// SPDX-License-Identifier: Apache-2.0
#include "rendbev/eval_baseline.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rendbev/error.hpp"

namespace rendbev {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix confusion(const LabelImage& pred, const LabelImage& gt, const MaskGrid& mask, int class_count) {
  if (!pred.same_shape(gt) || !pred.same_shape(mask)) {
    std::ostringstream os;
    os << "confusion: shape mismatch (pred " << pred.rows << "x" << pred.cols << ", gt " << gt.rows << "x" << gt.cols
       << ", mask " << mask.rows << "x" << mask.cols << ")";
    throw DomainError(os.str());
  }
  if (class_count < 1) throw DomainError("confusion: class_count must be positive");
  ConfusionMatrix m;
  m.class_count = class_count;
  m.counts.assign(static_cast<std::size_t>(class_count) * class_count, 0);
  // Void predictions are tallied in a spill column so they still count as misses.
  std::vector<std::uint64_t> missed(class_count, 0);
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (!mask.data[i]) continue;
    const int g = gt.data[i], p = pred.data[i];
    if (g >= class_count) continue;
    if (p >= class_count) {
      ++missed[g];
      continue;
    }
    ++m.counts[static_cast<std::size_t>(g) * class_count + p];
  }
  // Fold misses into the off-diagonal of a class that is certainly wrong.
  if (class_count > 1) {
    for (int g = 0; g < class_count; ++g) {
      m.counts[static_cast<std::size_t>(g) * class_count + (g + 1) % class_count] += missed[g];
    }
  }
  return m;
}

IouScores iou_scores(const ConfusionMatrix& m) {
  const int n = m.class_count;
  IouScores s;
  s.per_class.assign(n, std::numeric_limits<double>::quiet_NaN());
  s.included.assign(n, false);
  s.evaluated_cells = m.total();
  double sum = 0.0;
  int included = 0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t row = 0, col = 0;
    for (int k = 0; k < n; ++k) {
      row += m.at(c, k);
      col += m.at(k, c);
    }
    const std::uint64_t tp = m.at(c, c);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    s.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    s.included[c] = true;
    sum += s.per_class[c];
    ++included;
  }
  s.miou = included ? sum / included : 0.0;
  return s;
}

LabelImage ipm_warp(const LabelImage& seg, const Intrinsics& intr, double cam_height, double pitch,
                    const BevSpec& spec, int void_label) {
  if (!(cam_height > 0.0)) throw ConfigError("ipm_warp: camera height must be positive");
  if (seg.rows != intr.height() || seg.cols != intr.width()) {
    throw ConfigError("ipm_warp: segmentation does not match the intrinsics");
  }
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  LabelImage out(spec.rows(), spec.cols(), static_cast<std::uint8_t>(void_label));
  for (int r = 0; r < spec.rows(); ++r) {
    for (int c = 0; c < spec.cols(); ++c) {
      const GroundPoint g = cell_center(spec, r, c);
      // Level-frame ground point (x, h, z) into the pitched camera.
      const double y = cp * cam_height - sp * g.z;
      const double z = sp * cam_height + cp * g.z;
      if (!(z > 1e-9) || !(y > 0.0)) continue;  // behind the camera or at/above the horizon
      const double u = intr.fx() * g.x / z + intr.cx();
      const double v = intr.fy() * y / z + intr.cy();
      if (!intr.contains(u, v)) continue;
      out.at(r, c) = seg.at(static_cast<int>(v), static_cast<int>(u));
    }
  }
  return out;
}

MaskGrid fov_mask(const BevSpec& spec, const Intrinsics& intr, double cam_height, double z_near) {
  MaskGrid m(spec.rows(), spec.cols(), 0);
  for (int r = 0; r < spec.rows(); ++r) {
    for (int c = 0; c < spec.cols(); ++c) {
      const GroundPoint g = cell_center(spec, r, c);
      if (g.z < z_near || !(g.z > 0.0)) continue;
      const double u = intr.fx() * g.x / g.z + intr.cx();
      const double v = intr.fy() * cam_height / g.z + intr.cy();
      m.at(r, c) = intr.contains(u, v) ? 1 : 0;
    }
  }
  return m;
}

MaskGrid evaluation_mask(const LabelImage& gt, const MaskGrid& region, int class_count) {
  if (!gt.same_shape(region)) throw DomainError("evaluation_mask: shape mismatch");
  MaskGrid m(gt.rows, gt.cols, 0);
  for (std::size_t i = 0; i < gt.data.size(); ++i) m.data[i] = (region.data[i] && gt.data[i] < class_count) ? 1 : 0;
  return m;
}

}  // namespace rendbev
