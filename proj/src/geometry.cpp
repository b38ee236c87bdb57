// SPDX-License-Identifier: Apache-2.0
#include "rendbev/geometry.hpp"

#include <cmath>
#include <sstream>

#include "rendbev/error.hpp"

namespace rendbev {

Intrinsics::Intrinsics(double fx, double fy, double cx, double cy, int width, int height)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ConfigError("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::centered(double f, int width, int height) {
  return Intrinsics(f, f, 0.5 * width, 0.5 * height, width, height);
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (!(ortho_err <= 1e-6) || !(std::abs(det - 1.0) <= 1e-6) || !translation.allFinite()) {
    std::ostringstream os;
    os << "pose: rotation is not orthonormal (max |RᵀR - I| = " << ortho_err << ", det = " << det << ")";
    throw ConfigError(os.str());
  }
}

Pose Pose::from_yaw(double yaw, const Vec3& t) {
  return Pose(Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix(), t);
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return Pose(rt, -(rt * translation_), Unchecked{});
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_, Unchecked{});
}

Pose compose_relative_pose(const Pose& k_to_world, const Pose& r_to_world) {
  return r_to_world.inverse() * k_to_world;
}

Ray pixel_ray(const Intrinsics& intr, double u, double v) {
  if (!intr.contains(u, v)) {
    std::ostringstream os;
    os << "pixel (" << u << ", " << v << ") outside " << intr.width() << "x" << intr.height() << " image";
    throw DomainError(os.str());
  }
  Vec3 d((u - intr.cx()) / intr.fx(), (v - intr.cy()) / intr.fy(), 1.0);
  return Ray{Vec3::Zero(), d.normalized()};
}

}  // namespace rendbev
