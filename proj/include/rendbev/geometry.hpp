// SPDX-License-Identifier: Apache-2.0
//
// Camera model and rigid transforms. Camera frames are x right, y down,
// z forward; the BEV ground plane is spanned by camera x and z.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rendbev {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ground-plane coordinates (lateral x, forward z) in a camera frame.
struct GroundPoint {
  double x = 0.0;
  double z = 0.0;
};

/// Pinhole intrinsics in pixels.
class Intrinsics {
 public:
  Intrinsics() = default;
  /// Throws ConfigError unless fx, fy > 0 and the principal point lies in the image.
  Intrinsics(double fx, double fy, double cx, double cy, int width, int height);

  /// Focal length `f` on both axes with the principal point at the image center.
  static Intrinsics centered(double f, int width, int height);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }

  /// Projects a camera-frame point to continuous pixel coordinates. z must be positive.
  Eigen::Vector2d project(const Vec3& p) const {
    return {fx_ * p.x() / p.z() + cx_, fy_ * p.y() / p.z() + cy_};
  }
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width_ && v < height_;
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;

 private:
  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  int width_ = 1, height_ = 1;
};

/// Rigid transform mapping camera-frame points into a parent frame.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  /// Throws ConfigError if `rotation` is not a proper rotation within 1e-6.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }
  static Pose translation(const Vec3& t) { return Pose(Mat3::Identity(), t); }
  /// Rotation by `yaw` radians about the camera y axis, then translation.
  static Pose from_yaw(double yaw, const Vec3& t);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  Vec3 apply_inverse(const Vec3& x) const { return rotation_.transpose() * (x - translation_); }
  Vec3 rotate(const Vec3& d) const { return rotation_ * d; }

  Pose inverse() const;
  /// (*this) ∘ other: first `other`, then `*this`.
  Pose operator*(const Pose& other) const;

 private:
  struct Unchecked {};
  Pose(const Mat3& r, const Vec3& t, Unchecked) : rotation_(r), translation_(t) {}

  Mat3 rotation_;
  Vec3 translation_;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  ///< unit length

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Relative pose mapping frame-k camera points into frame-r camera coordinates.
Pose compose_relative_pose(const Pose& k_to_world, const Pose& r_to_world);

/// Back-projects continuous pixel (u, v) to a unit ray in that camera's frame.
/// Throws DomainError for pixels outside the image.
Ray pixel_ray(const Intrinsics& intr, double u, double v);

/// Ray through the center of integer pixel (col, row).
inline Ray pixel_center_ray(const Intrinsics& intr, int col, int row) {
  return pixel_ray(intr, col + 0.5, row + 0.5);
}

/// Orthographic BEV projection: drops the vertical (y) coordinate.
inline GroundPoint ortho_project(const Vec3& p) { return {p.x(), p.z()}; }

inline Vec3 transform_point(const Pose& pose, const Vec3& x) { return pose.apply(x); }

}  // namespace rendbev
