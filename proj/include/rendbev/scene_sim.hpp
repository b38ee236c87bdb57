// SPDX-License-Identifier: Apache-2.0
//
// Synthetic scenes, trajectories, and the exact ground truth derived from
// them (perspective labels, depth, BEV labels).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rendbev/bev_grid.hpp"
#include "rendbev/geometry.hpp"
#include "rendbev/raster.hpp"
#include "rendbev/rng.hpp"
#include "rendbev/scene.hpp"

namespace rendbev {

enum class Difficulty { kFlat, kStatic, kOcclusion };

Difficulty parse_difficulty(const std::string& name);
std::string to_string(Difficulty d);

/// Class indices of the default palette.
namespace classes {
inline constexpr int kRoad = 0;
inline constexpr int kSidewalk = 1;
inline constexpr int kTerrain = 2;
inline constexpr int kBuilding = 3;
inline constexpr int kCar = 4;
}  // namespace classes

/// Road along world +z with sidewalks. `static` adds terrain, buildings and
/// parked cars; `occlusion` adds a large vehicle parked close to the start.
Scene generate_scene(std::uint64_t seed, Difficulty difficulty, double camera_height = 1.55);

/// Index of the occluding box placed by `occlusion` scenes, if any.
std::optional<std::size_t> occluder_index(const Scene& scene);

/// n camera-to-world poses along a constant-curvature path starting at the
/// origin heading +z; frame i sits at arc length i * step_m.
std::vector<Pose> straight_trajectory(int n, double step_m, double yaw_rate);

struct SurfaceHit {
  double t = 0.0;      ///< distance along the ray
  int class_id = 0;
  int box = -1;        ///< index of the hit box, -1 for the ground
};

/// Nearest positive intersection of a world ray with the ground or a box.
std::optional<SurfaceHit> raycast(const Scene& scene, const Ray& world_ray);

/// Label of the first surface seen through continuous pixel (u, v); void when
/// nothing is hit within z_far (view-frame depth).
int raycast_label(const Scene& scene, const Pose& pose, const Intrinsics& intr, double u, double v,
                  double z_far = 80.0);
/// View-frame depth of the first surface through (u, v), clamped to [z_near, z_far].
double raycast_depth(const Scene& scene, const Pose& pose, const Intrinsics& intr, double u, double v,
                     double z_near = 3.0, double z_far = 80.0);

LabelImage gt_perspective_seg(const Scene& scene, const Pose& pose, const Intrinsics& intr, double z_far = 80.0);
DepthImage render_depth_image(const Scene& scene, const Pose& pose, const Intrinsics& intr, double z_near = 3.0,
                              double z_far = 80.0);

/// BEV labels in the frame of `pose`: class of the tallest box whose footprint
/// holds the cell centre, otherwise the ground class there.
LabelImage gt_bev(const Scene& scene, const BevSpec& spec, const Pose& pose);

/// Replaces each pixel with probability `rate` by a different label drawn
/// uniformly from the scene classes plus void.
LabelImage corrupt_labels(const LabelImage& seg, double rate, int class_count, int void_class, Rng& rng);

/// Cells of `spec` (in the frame of `pose`) whose ground point is hidden
/// from the camera by box `box_index`.
MaskGrid box_shadow(const Scene& scene, std::size_t box_index, const BevSpec& spec, const Pose& pose);

}  // namespace rendbev
