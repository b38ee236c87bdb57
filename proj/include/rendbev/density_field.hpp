// SPDX-License-Identifier: Apache-2.0
//
// Frozen geometry oracle: world point -> volumetric density (1/m).
// Fields are immutable once built and safe to query concurrently.
#pragma once

#include <memory>

#include "rendbev/geometry.hpp"
#include "rendbev/raster.hpp"
#include "rendbev/scene.hpp"

namespace rendbev {

inline constexpr double kDefaultSolidDensity = 50.0;

class DensityField {
 public:
  virtual ~DensityField() = default;
  /// Non-negative, finite, deterministic.
  virtual double density(const Vec3& x_world) const = 0;
};

using FieldPtr = std::shared_ptr<const DensityField>;

/// Viewing volume of one camera between two depth planes.
struct Frustum {
  Pose pose;  ///< camera -> world
  Intrinsics intr;
  double z_near = 3.0;
  double z_far = 80.0;

  Frustum() = default;
  /// Throws ConfigError unless 0 < z_near < z_far.
  Frustum(const Pose& pose, const Intrinsics& intr, double z_near, double z_far);

  /// Closed in depth, half-open in pixels.
  bool contains(const Vec3& x_world) const;
};

double query_density(const DensityField& f, const Vec3& x_world);

FieldPtr empty_field();

/// σ_solid inside any scene box or on/below the ground plane, else 0.
/// Throws ConfigError if sigma_solid ≤ 0.
FieldPtr scene_field(const Scene& scene, double sigma_solid = kDefaultSolidDensity);

/// Single-view occupancy: free in front of the observed depth along each pixel
/// ray, solid at and behind it, zero outside the frustum. `depth` holds view-frame
/// z per pixel. Throws ConfigError on dimension mismatch.
FieldPtr depth_shadow_field(const DepthImage& depth, const Frustum& view,
                            double sigma_solid = kDefaultSolidDensity);

/// Zeroes `f` outside `view`.
FieldPtr restrict_to_frustum(FieldPtr f, const Frustum& view);

}  // namespace rendbev
