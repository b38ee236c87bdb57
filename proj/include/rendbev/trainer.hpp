// SPDX-License-Identifier: Apache-2.0
//
// Self-supervised optimization of a reference-frame BEV grid by rendering
// the perspective labels of other frames of the sequence.
#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rendbev/bev_grid.hpp"
#include "rendbev/density_field.hpp"
#include "rendbev/loss_grad.hpp"
#include "rendbev/renderer.hpp"
#include "rendbev/rng.hpp"

namespace rendbev {

/// Which frames, relative to the reference r, supply rendered supervision.
struct FrameOffsetPolicy {
  std::vector<int> adjacent{-1, 1};
  std::vector<std::pair<int, int>> future_ranges;  ///< inclusive offset ranges
  bool enabled_future = true;

  /// {-1, +1} plus one draw from each of [5,11], [12,18], [19,25], [26,32], [33,39].
  static FrameOffsetPolicy standard();
  void validate() const;
};

struct TrainConfig {
  double lr = 20.0;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  bool nesterov = true;
  int iterations = 500;
  int patches_total = 192;
  int patch_size = 16;
  std::uint64_t seed = 0;
  int threads = 1;

  /// Optimizer settings of the full-scale network setup.
  static TrainConfig full_scale();
  void validate() const;
};

struct SupervisionPatch {
  int frame = 0;
  PatchOrigin origin;
  friend bool operator==(const SupervisionPatch&, const SupervisionPatch&) = default;
};

/// Frames reachable from `r` under `policy` (one draw per future range),
/// with `patches_total` patch origins split as evenly as possible among them.
/// Throws ConfigError if no frame is reachable.
std::vector<SupervisionPatch> sample_supervision(int n_frames, int r, const FrameOffsetPolicy& policy,
                                                 int patches_total, const Intrinsics& intr, int patch_size,
                                                 Rng& rng);

struct SgdState {
  std::vector<double> velocity;
};

/// One SGD step with optional Nesterov momentum and L2 weight decay.
/// Throws NumericError on non-finite gradients or results.
void sgd_step(BevGrid& grid, const GradBuffer& grad, SgdState& state, const TrainConfig& cfg);

/// Per-frame inputs. fields[k] is the density queried by rays cast from frame k.
struct TrainData {
  std::vector<Pose> poses;  ///< camera -> world
  Intrinsics intr;
  std::vector<LabelImage> labels;
  std::vector<FieldPtr> fields;

  int frame_count() const { return static_cast<int>(poses.size()); }
  void validate() const;
};

struct IterationStats {
  std::optional<double> loss;  ///< absent when every ray was filtered
  double kept_fraction = 0.0;  ///< kept rays / labeled rays
};

struct TrainResult {
  BevGrid grid;
  std::vector<IterationStats> history;
  std::vector<std::uint32_t> coverage;  ///< weight-bearing kept samples per cell
  double seconds_per_iteration = 0.0;

  /// Cells with at least one weight-bearing kept sample.
  MaskGrid supervised_mask() const;
};

TrainResult train_bev(const TrainData& data, int reference, const BevSpec& spec, int class_count,
                      const RenderConfig& render, const LossConfig& loss, const TrainConfig& train,
                      const FrameOffsetPolicy& policy);

}  // namespace rendbev
