// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "rendbev/density_field.hpp"
#include "rendbev/error.hpp"
#include "rendbev/rng.hpp"
#include "rendbev/scene.hpp"
#include "rendbev/scene_sim.hpp"

using namespace rendbev;

namespace {

Scene one_car_scene() {
  Scene s;
  s.classes = default_palette();
  Box car;
  car.center = {0.0, s.ground_y - 0.75, 10.0};
  car.size = {1.8, 1.5, 4.2};
  car.class_id = classes::kCar;
  s.boxes.push_back(car);
  s.validate();
  return s;
}

const Intrinsics kIntr = Intrinsics::centered(160, 320, 96);

}  // namespace

TEST_CASE("empty field is zero everywhere") {
  const FieldPtr f = empty_field();
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(query_density(*f, {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)}) == 0.0);
  }
}

TEST_CASE("scene field: boxes and the ground half-space are solid") {
  const Scene s = one_car_scene();
  const FieldPtr f = scene_field(s, 50.0);
  CHECK(query_density(*f, s.boxes[0].center) == 50.0);
  CHECK(query_density(*f, s.boxes[0].center + Vec3(0.9 + 1.0, 0, 0)) == 0.0);
  CHECK(query_density(*f, {3.0, s.ground_y + 0.2, 20.0}) == 50.0);
  CHECK(query_density(*f, {3.0, s.ground_y - 10.0, 20.0}) == 0.0);
  // Closed solids: the box face counts as inside.
  CHECK(query_density(*f, s.boxes[0].center + Vec3(0.9, 0, 0)) == 50.0);
}

TEST_CASE("field queries are non-negative and deterministic") {
  const Scene s = generate_scene(4, Difficulty::kStatic);
  const FieldPtr f = scene_field(s);
  const Pose pose = Pose::identity();
  const FieldPtr shadow = depth_shadow_field(render_depth_image(s, pose, kIntr), Frustum(pose, kIntr, 3, 80));
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 x(rng.uniform(-30, 30), rng.uniform(-10, 3), rng.uniform(-5, 90));
    for (const FieldPtr& g : {f, shadow}) {
      const double a = query_density(*g, x);
      CHECK(a >= 0.0);
      CHECK(std::isfinite(a));
      CHECK(a == query_density(*g, x));
    }
  }
}

TEST_CASE("depth shadow field") {
  const Scene s = one_car_scene();
  const Pose pose = Pose::identity();
  const Frustum view(pose, kIntr, 3.0, 80.0);
  const DepthImage depth = render_depth_image(s, pose, kIntr);
  const FieldPtr f = depth_shadow_field(depth, view, 50.0);
  // The car's rear face is at z = 7.9 straight ahead.
  const double face = s.boxes[0].center.z() - 2.1;
  CHECK(query_density(*f, {0.0, 0.5, face - 1.0}) == 0.0);
  CHECK(query_density(*f, {0.0, 0.5, face + 5.0}) == 50.0);
  CHECK(query_density(*f, {200.0, 0.5, 20.0}) == 0.0);
  CHECK(query_density(*f, {0.0, 0.5, -5.0}) == 0.0);
  DepthImage wrong(10, 10, 5.0);
  CHECK_THROWS_AS(depth_shadow_field(wrong, view), ConfigError);
}

TEST_CASE("shadow field agrees with the scene on first hits") {
  const Scene s = generate_scene(8, Difficulty::kStatic);
  const Pose pose = Pose::identity();
  const Frustum view(pose, kIntr, 3.0, 80.0);
  const FieldPtr world = scene_field(s);
  const FieldPtr shadow = depth_shadow_field(render_depth_image(s, pose, kIntr), view);
  const double step = 0.05;
  int checked = 0;
  for (int v = 2; v < kIntr.height(); v += 7) {
    for (int u = 2; u < kIntr.width(); u += 13) {
      const Ray r = pixel_center_ray(kIntr, u, v);
      double hit_world = -1, hit_shadow = -1;
      for (double z = 3.0; z <= 80.0; z += step) {
        const Vec3 x = r.at(z / r.direction.z());
        if (hit_world < 0 && query_density(*world, x) > 0) hit_world = z;
        if (hit_shadow < 0 && query_density(*shadow, x) > 0) hit_shadow = z;
      }
      if (hit_world < 0) continue;
      ++checked;
      CHECK(std::abs(hit_world - hit_shadow) <= step + 1e-3);
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("frustum restriction") {
  const Scene s = one_car_scene();
  const Frustum view(Pose::identity(), kIntr, 3.0, 80.0);
  const FieldPtr base = scene_field(s);
  const FieldPtr r = restrict_to_frustum(base, view);
  CHECK(query_density(*restrict_to_frustum(empty_field(), view), {0, 0, 10}) == 0.0);
  CHECK(query_density(*r, s.boxes[0].center) == query_density(*base, s.boxes[0].center));
  CHECK(query_density(*r, {0, 2.0, -4.0}) == 0.0);  // below ground but behind the camera
  const FieldPtr rr = restrict_to_frustum(r, view);
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x(rng.uniform(-40, 40), rng.uniform(-5, 5), rng.uniform(-5, 90));
    CHECK(query_density(*rr, x) == query_density(*r, x));
  }
  CHECK_THROWS_AS(Frustum(Pose::identity(), kIntr, 5.0, 5.0), ConfigError);
  CHECK_THROWS_AS(Frustum(Pose::identity(), kIntr, 0.0, 5.0), ConfigError);
}
