// SPDX-License-Identifier: Apache-2.0
#include "rendbev/density_field.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "rendbev/error.hpp"

namespace rendbev {

Frustum::Frustum(const Pose& pose_, const Intrinsics& intr_, double z_near_, double z_far_)
    : pose(pose_), intr(intr_), z_near(z_near_), z_far(z_far_) {
  if (!(z_near > 0.0 && z_near < z_far)) throw ConfigError("frustum: require 0 < z_near < z_far");
}

bool Frustum::contains(const Vec3& x_world) const {
  const Vec3 p = pose.apply_inverse(x_world);
  if (!(p.z() >= z_near && p.z() <= z_far)) return false;
  const Eigen::Vector2d uv = intr.project(p);
  return intr.contains(uv.x(), uv.y());
}

double query_density(const DensityField& f, const Vec3& x_world) { return f.density(x_world); }

namespace {

class EmptyField final : public DensityField {
 public:
  double density(const Vec3&) const override { return 0.0; }
};

class SceneField final : public DensityField {
 public:
  SceneField(const Scene& scene, double sigma) : ground_y_(scene.ground_y), sigma_(sigma) {
    solids_.reserve(scene.boxes.size());
    for (const Box& b : scene.boxes) {
      Solid s;
      s.box = b;
      // Conservative axis-aligned bounds for early rejection.
      const double c = std::abs(std::cos(b.yaw)), sn = std::abs(std::sin(b.yaw));
      const double hx = 0.5 * (c * b.size.x() + sn * b.size.z());
      const double hz = 0.5 * (sn * b.size.x() + c * b.size.z());
      s.lo = b.center - Vec3(hx, 0.5 * b.size.y(), hz);
      s.hi = b.center + Vec3(hx, 0.5 * b.size.y(), hz);
      solids_.push_back(s);
    }
  }

  double density(const Vec3& x) const override {
    if (x.y() >= ground_y_) return sigma_;
    for (const Solid& s : solids_) {
      if (x.x() < s.lo.x() || x.x() > s.hi.x() || x.z() < s.lo.z() || x.z() > s.hi.z() ||
          x.y() < s.lo.y() || x.y() > s.hi.y()) {
        continue;
      }
      if (s.box.contains(x)) return sigma_;
    }
    return 0.0;
  }

 private:
  struct Solid {
    Box box;
    Vec3 lo, hi;
  };
  double ground_y_;
  double sigma_;
  std::vector<Solid> solids_;
};

class DepthShadowField final : public DensityField {
 public:
  DepthShadowField(DepthImage depth, const Frustum& view, double sigma)
      : depth_(std::move(depth)), view_(view), sigma_(sigma) {}

  double density(const Vec3& x_world) const override {
    const Vec3 p = view_.pose.apply_inverse(x_world);
    if (!(p.z() >= view_.z_near && p.z() <= view_.z_far)) return 0.0;
    const Eigen::Vector2d uv = view_.intr.project(p);
    if (!view_.intr.contains(uv.x(), uv.y())) return 0.0;
    const int col = static_cast<int>(uv.x());
    const int row = static_cast<int>(uv.y());
    return p.z() >= depth_.at(row, col) ? sigma_ : 0.0;
  }

 private:
  DepthImage depth_;
  Frustum view_;
  double sigma_;
};

class RestrictedField final : public DensityField {
 public:
  RestrictedField(FieldPtr inner, const Frustum& view) : inner_(std::move(inner)), view_(view) {}

  double density(const Vec3& x_world) const override {
    return view_.contains(x_world) ? inner_->density(x_world) : 0.0;
  }

 private:
  FieldPtr inner_;
  Frustum view_;
};

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("density field: sigma_solid must be positive and finite");
}

}  // namespace

FieldPtr empty_field() { return std::make_shared<EmptyField>(); }

FieldPtr scene_field(const Scene& scene, double sigma_solid) {
  check_sigma(sigma_solid);
  return std::make_shared<SceneField>(scene, sigma_solid);
}

FieldPtr depth_shadow_field(const DepthImage& depth, const Frustum& view, double sigma_solid) {
  check_sigma(sigma_solid);
  if (depth.rows != view.intr.height() || depth.cols != view.intr.width()) {
    std::ostringstream os;
    os << "depth_shadow_field: depth image is " << depth.cols << "x" << depth.rows << ", intrinsics expect "
       << view.intr.width() << "x" << view.intr.height();
    throw ConfigError(os.str());
  }
  return std::make_shared<DepthShadowField>(depth, view, sigma_solid);
}

FieldPtr restrict_to_frustum(FieldPtr f, const Frustum& view) {
  return std::make_shared<RestrictedField>(std::move(f), view);
}

}  // namespace rendbev
