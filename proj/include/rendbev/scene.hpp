// SPDX-License-Identifier: Apache-2.0
//
// Parametric synthetic world: a horizontal ground plane painted with class
// regions, and yaw-rotated boxes resting on it. World frame follows the
// camera convention (y down), so the ground is the plane y = ground_y.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rendbev/geometry.hpp"

namespace rendbev {

struct ClassInfo {
  std::string name;
  std::array<std::uint8_t, 3> rgb{};

  friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

/// Rectangle on the ground plane, rotated by `yaw` about the vertical axis.
struct Footprint {
  double center_x = 0.0;
  double center_z = 0.0;
  double size_x = 0.0;
  double size_z = 0.0;
  double yaw = 0.0;

  /// Closed containment test for world (x, z).
  bool contains(double x, double z) const;
  std::array<Eigen::Vector2d, 4> corners() const;
};

/// Closed rectangular prism. `size` is (width x, height y, length z) in its
/// local frame; the box is rotated by `yaw` about the world y axis.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;
  int class_id = 0;

  bool contains(const Vec3& p) const;
  Footprint footprint() const { return {center.x(), center.z(), size.x(), size.z(), yaw}; }
  double top_y() const { return center.y() - 0.5 * size.y(); }
  double bottom_y() const { return center.y() + 0.5 * size.y(); }
  /// Entry distance of the ray into the box, if it hits at t ≥ t_min.
  std::optional<double> intersect(const Ray& ray, double t_min = 0.0) const;
};

/// Ground area carrying a class other than the default ground class.
struct GroundRegion {
  Footprint area;
  int class_id = 0;
};

struct Scene {
  double ground_y = 1.55;  ///< camera height above the ground for level cameras at y = 0
  std::vector<ClassInfo> classes;
  std::vector<GroundRegion> ground_regions;  ///< later regions override earlier ones
  std::vector<Box> boxes;
  int ground_class = 0;
  int void_class = 255;

  int class_count() const { return static_cast<int>(classes.size()); }
  /// Class painted on the ground at world (x, z).
  int ground_class_at(double x, double z) const;
  /// Throws ConfigError on floating or overlapping boxes, or bad class ids.
  void validate() const;
  std::array<std::uint8_t, 3> color_of(int class_id) const;
};

/// Road, sidewalk, terrain, building, car.
std::vector<ClassInfo> default_palette();

}  // namespace rendbev
