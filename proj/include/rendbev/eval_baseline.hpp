// SPDX-License-Identifier: Apache-2.0
//
// BEV segmentation metrics and the flat-ground inverse perspective mapping baseline.
#pragma once

#include <cstdint>
#include <vector>

#include "rendbev/bev_grid.hpp"
#include "rendbev/geometry.hpp"
#include "rendbev/raster.hpp"

namespace rendbev {

/// counts[gt * C + pred]; only masked-in cells are counted.
struct ConfusionMatrix {
  int class_count = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * class_count + pred]; }
  std::uint64_t total() const;
};

/// Cells with mask != 0 and labels below class_count are tallied; cells whose
/// ground truth is void (>= class_count) are skipped, void predictions count
/// as a miss for the ground-truth class. Throws DomainError on shape mismatch.
ConfusionMatrix confusion(const LabelImage& pred, const LabelImage& gt, const MaskGrid& mask, int class_count);

struct IouScores {
  std::vector<double> per_class;    ///< NaN for classes absent from both prediction and ground truth
  std::vector<bool> included;
  double miou = 0.0;                ///< mean over included classes
  std::uint64_t evaluated_cells = 0;
};

IouScores iou_scores(const ConfusionMatrix& m);

/// Backward warp of a perspective label image onto the BEV assuming a flat
/// horizontal ground `cam_height` below a camera pitched down by `pitch` rad.
LabelImage ipm_warp(const LabelImage& seg, const Intrinsics& intr, double cam_height, double pitch,
                    const BevSpec& spec, int void_label = 255);

/// Cells whose ground point (x, cam_height, z) projects into the image of a
/// level camera and lies at least z_near ahead.
MaskGrid fov_mask(const BevSpec& spec, const Intrinsics& intr, double cam_height, double z_near);

/// mask && gt != void.
MaskGrid evaluation_mask(const LabelImage& gt, const MaskGrid& region, int class_count);

}  // namespace rendbev
