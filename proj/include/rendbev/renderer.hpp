// SPDX-License-Identifier: Apache-2.0
//
// Forward rendering of class probabilities: stratified disparity sampling,
// density integration, compositing, and the out-of-BEV indicator filter.
#pragma once

#include <span>
#include <vector>

#include "rendbev/bev_grid.hpp"
#include "rendbev/density_field.hpp"
#include "rendbev/geometry.hpp"
#include "rendbev/rng.hpp"

namespace rendbev {

struct RenderConfig {
  int m = 64;             ///< samples per ray
  double z_near = 3.0;    ///< metres
  double z_far = 80.0;    ///< metres
  bool jitter = true;     ///< stratified noise inside each disparity bin
  double tau = 0.2;       ///< rays with rendered OOB indicator above tau are dropped
  int patch_size = 16;    ///< pixels per patch side

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Per-ray record of the discretized rendering integral.
struct RayIntegration {
  double u = 0.0, v = 0.0;                 ///< pixel coordinates of the ray
  std::vector<double> depths;              ///< ascending, casting-frame z along the ray direction
  std::vector<double> deltas;
  std::vector<double> sigmas;
  std::vector<double> alphas;
  std::vector<double> transmittances;      ///< T_i, T_1 = 1
  std::vector<double> weights;             ///< T_i * alpha_i
  std::vector<CellRef> cells;
  std::vector<double> probs;               ///< m x C, uniform for out-of-bounds samples
  std::vector<double> rendered;            ///< composited class probabilities
  double residual_transmittance = 1.0;     ///< T_{m+1}
  double oob = 0.0;                        ///< rendered out-of-BEV indicator
  bool kept = true;

  int class_count() const { return depths.empty() ? 0 : static_cast<int>(probs.size() / depths.size()); }
};

struct Integration {
  std::vector<double> alphas;
  std::vector<double> transmittances;
  std::vector<double> weights;
  double residual_transmittance = 1.0;
};

/// m ascending depths, stratified uniformly in disparity between z_far and z_near.
std::vector<double> sample_ray_depths(const RenderConfig& cfg, Rng& rng);
void sample_ray_depths(const RenderConfig& cfg, Rng& rng, std::vector<double>& out);

/// Interval lengths: gaps between consecutive depths, last one up to z_far.
std::vector<double> depth_deltas(std::span<const double> depths, double z_far);

/// alpha_i = 1 - exp(-sigma_i delta_i), T_i = prod_{j<i} (1 - alpha_j), w_i = T_i alpha_i.
Integration integrate_ray(std::span<const double> sigmas, std::span<const double> deltas);

/// sum_i w_i l_i over m probability vectors stored row-wise (m x C).
std::vector<double> render_class_probs(std::span<const double> weights, std::span<const double> probs,
                                       int class_count);

double render_scalar(std::span<const double> weights, std::span<const double> values);

/// Everything a ray cast from frame k needs to look up density and BEV probabilities.
struct RayContext {
  const ProbGrid* probs = nullptr;       ///< softmax of the reference-frame grid
  const DensityField* field = nullptr;   ///< queried in world coordinates
  Pose k_to_world;
  Pose k_to_ref;
  Intrinsics intr;
};

/// Renders the ray through continuous pixel (u, v) of frame k into `out`,
/// reusing its buffers. Out-of-bounds samples feed the OOB indicator and are
/// left out of `rendered`.
void render_ray(const RayContext& ctx, const RenderConfig& cfg, double u, double v, Rng& rng,
                RayIntegration& out);

struct PatchOrigin {
  int col = 0;
  int row = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Moves the origin so a patch of side `size` lies fully inside the image.
PatchOrigin clamp_patch_origin(const Intrinsics& intr, int size, PatchOrigin origin);

/// Renders every pixel centre of a patch, in row-major pixel order.
std::vector<RayIntegration> render_patch(const RayContext& ctx, PatchOrigin origin, const RenderConfig& cfg,
                                         Rng& rng);

}  // namespace rendbev
