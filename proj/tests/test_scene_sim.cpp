// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "rendbev/error.hpp"
#include "rendbev/io.hpp"
#include "rendbev/scene_sim.hpp"

using namespace rendbev;

namespace {

const Intrinsics kIntr = Intrinsics::centered(128, 256, 128);

Scene bare_scene() {
  Scene s;
  s.classes = default_palette();
  return s;
}

Scene one_car(double yaw = 0.3) {
  Scene s = bare_scene();
  Box car;
  car.center = {1.0, s.ground_y - 0.75, 9.0};
  car.size = {1.8, 1.5, 4.2};
  car.yaw = yaw;
  car.class_id = classes::kCar;
  s.boxes.push_back(car);
  s.validate();
  return s;
}

// First solid met when marching along the ray in small steps.
int dense_label(const Scene& s, const Ray& r, double max_t) {
  for (double t = 0.01; t < max_t; t += 0.01) {
    const Vec3 x = r.at(t);
    int best = -1;
    double top = 1e9;
    for (const Box& b : s.boxes) {
      if (b.contains(x) && b.top_y() < top) {
        top = b.top_y();
        best = b.class_id;
      }
    }
    if (best >= 0) return best;
    if (x.y() >= s.ground_y) return s.ground_class_at(x.x(), x.z());
  }
  return s.void_class;
}

}  // namespace

TEST_CASE("scene generation is deterministic and well formed") {
  for (auto d : {Difficulty::kFlat, Difficulty::kStatic, Difficulty::kOcclusion}) {
    const Scene a = generate_scene(17, d), b = generate_scene(17, d);
    CHECK(io::scene_to_json(a) == io::scene_to_json(b));
    CHECK_NOTHROW(a.validate());
  }
  CHECK(io::scene_to_json(generate_scene(1, Difficulty::kStatic)) !=
        io::scene_to_json(generate_scene(2, Difficulty::kStatic)));
  CHECK(generate_scene(3, Difficulty::kFlat).boxes.empty());
  CHECK_FALSE(generate_scene(3, Difficulty::kStatic).boxes.empty());
  CHECK(parse_difficulty("occlusion") == Difficulty::kOcclusion);
  CHECK_THROWS_AS(parse_difficulty("hard"), ConfigError);
}

TEST_CASE("scene validation") {
  Scene s = one_car();
  Box floating = s.boxes[0];
  floating.center.x() += 10.0;
  floating.center.y() -= 1.0;  // bottom above the ground is fine
  s.boxes.push_back(floating);
  CHECK_NOTHROW(s.validate());
  Box sunk = floating;
  sunk.center.x() += 10.0;
  sunk.center.y() += 3.0;
  s.boxes.push_back(sunk);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.boxes.pop_back();
  Box overlap = s.boxes[0];
  overlap.center.z() += 1.0;
  s.boxes.push_back(overlap);
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("occluder shadows a tenth of the BEV") {
  const BevSpec spec = BevSpec::desk_default();
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Scene s = generate_scene(seed, Difficulty::kOcclusion);
    const auto idx = occluder_index(s);
    REQUIRE(idx.has_value());
    const MaskGrid shadow = box_shadow(s, *idx, spec, Pose::identity());
    std::size_t n = 0;
    for (auto v : shadow.data) n += v;
    CHECK(static_cast<double>(n) >= 0.10 * spec.cell_count());
  }
}

TEST_CASE("trajectories") {
  const auto straight = straight_trajectory(5, 0.5, 0.0);
  for (int i = 0; i < 5; ++i) {
    CHECK(straight[i].translation() == Vec3(0, 0, 0.5 * i));
    CHECK(straight[i].rotation() == Mat3::Identity());
  }
  const auto two = straight_trajectory(2, 5.0, 0.0);
  const Pose rel = compose_relative_pose(two[1], two[0]);
  CHECK((rel.translation() - Vec3(0, 0, 5)).norm() < 1e-12);
  const double kappa = 0.02;
  const auto curved = straight_trajectory(30, 1.0, kappa);
  for (int i = 0; i < 30; ++i) {
    const Vec3 fwd = curved[i].rotate(Vec3::UnitZ());
    CHECK(std::abs(std::atan2(fwd.x(), fwd.z()) - i * kappa) < 1e-9);
    if (i) CHECK(std::abs((curved[i].translation() - curved[i - 1].translation()).norm() - 1.0) < 1e-3);
  }
  CHECK_THROWS_AS(straight_trajectory(1, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(straight_trajectory(3, 0.0, 0.0), ConfigError);
}

TEST_CASE("perspective labels and depth on a flat ground") {
  const Scene s = bare_scene();
  const Pose pose = Pose::identity();
  const LabelImage seg = gt_perspective_seg(s, pose, kIntr);
  const DepthImage depth = render_depth_image(s, pose, kIntr);
  CHECK(seg.at(10, 100) == s.void_class);
  CHECK(depth.at(10, 100) == 80.0);
  for (double d : {5.0, 20.0, 40.0, 63.0}) {
    const double v = kIntr.cy() + d;
    const double z = kIntr.fy() * s.ground_y / d;
    CHECK(raycast_label(s, pose, kIntr, kIntr.cx(), v) == s.ground_class);
    CHECK(std::abs(raycast_depth(s, pose, kIntr, kIntr.cx(), v, 0.1, 1000.0) - z) < 1e-6);
  }
  for (std::size_t i = 0; i < seg.data.size(); ++i) CHECK((depth.data[i] < 80.0) == (seg.data[i] != s.void_class));
}

TEST_CASE("car silhouette matches a dense marching oracle") {
  const Scene s = one_car();
  const Pose pose = Pose::identity();
  const LabelImage seg = gt_perspective_seg(s, pose, kIntr);
  int car = 0, mismatches = 0, total = 0;
  for (int v = 0; v < kIntr.height(); v += 3) {
    for (int u = 0; u < kIntr.width(); u += 3) {
      const Ray r = pixel_center_ray(kIntr, u, v);
      const int oracle = dense_label(s, r, 40.0);
      const int got = seg.at(v, u);
      if (got == classes::kCar) ++car;
      // Pixels whose ray leaves the 40 m march see ground or void far away.
      if (oracle == s.void_class) continue;
      ++total;
      mismatches += oracle != got;
    }
  }
  CHECK(car > 50);
  CHECK(mismatches <= total / 200);  // grazing edges only
}

TEST_CASE("ground-truth BEV") {
  const BevSpec spec = BevSpec::desk_default();
  SUBCASE("bare ground is the ground class everywhere") {
    const LabelImage g = gt_bev(bare_scene(), spec, Pose::identity());
    for (auto v : g.data) CHECK(v == 0);
  }
  SUBCASE("car footprint cells") {
    const Scene s = one_car();
    const LabelImage g = gt_bev(s, spec, Pose::identity());
    const Footprint fp = s.boxes[0].footprint();
    int n = 0;
    for (int r = 0; r < spec.rows(); ++r) {
      for (int c = 0; c < spec.cols(); ++c) {
        const GroundPoint p = cell_center(spec, r, c);
        const bool in = fp.contains(p.x, p.z);
        CHECK((g.at(r, c) == classes::kCar) == in);
        n += in;
      }
    }
    CHECK(n > 100);
  }
  SUBCASE("forward motion shifts rows") {
    const Scene s = generate_scene(5, Difficulty::kStatic);
    const LabelImage a = gt_bev(s, spec, Pose::identity());
    const int shift = 10;
    const LabelImage b = gt_bev(s, spec, Pose::translation({0, 0, shift * spec.cell_size()}));
    int agree = 0, total = 0;
    for (int r = 0; r + shift < spec.rows(); ++r) {
      for (int c = 0; c < spec.cols(); ++c) {
        ++total;
        agree += a.at(r + shift, c) == b.at(r, c);
      }
    }
    CHECK(agree >= total * 0.99);
  }
}

TEST_CASE("label corruption") {
  Rng rng(1);
  LabelImage img(128, 256);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(5));
  Rng a(7);
  CHECK(corrupt_labels(img, 0.0, 5, 255, a) == img);
  Rng b(7);
  const LabelImage all = corrupt_labels(img, 1.0, 5, 255, b);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(all.data[i] != img.data[i]);
  Rng c(7), d(7);
  const LabelImage tenth = corrupt_labels(img, 0.1, 5, 255, c);
  CHECK(tenth == corrupt_labels(img, 0.1, 5, 255, d));
  std::size_t changed = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) changed += tenth.data[i] != img.data[i];
  const double frac = static_cast<double>(changed) / img.data.size();
  CHECK(frac >= 0.09);
  CHECK(frac <= 0.11);
  CHECK_THROWS_AS(corrupt_labels(img, 1.5, 5, 255, rng), ConfigError);
}

TEST_CASE("ground pixels land on ground cells of the BEV") {
  const Scene s = generate_scene(9, Difficulty::kStatic);
  const BevSpec spec = BevSpec::desk_default();
  const Pose pose = Pose::identity();
  const LabelImage seg = gt_perspective_seg(s, pose, kIntr);
  const DepthImage depth = render_depth_image(s, pose, kIntr);
  const LabelImage bev = gt_bev(s, spec, pose);
  int checked = 0, bad = 0;
  for (int v = 0; v < kIntr.height(); ++v) {
    for (int u = 0; u < kIntr.width(); ++u) {
      const int label = seg.at(v, u);
      if (label >= classes::kBuilding || label == s.void_class) continue;
      const Ray r = pixel_center_ray(kIntr, u, v);
      const Vec3 x = r.direction * (depth.at(v, u) / r.direction.z());
      const CellRef c = world_to_cell(spec, ortho_project(x));
      if (!c.in_bounds) continue;
      ++checked;
      bool ok = false;
      for (int dr = -1; dr <= 1 && !ok; ++dr) {
        for (int dc = -1; dc <= 1 && !ok; ++dc) {
          const int rr = c.row + dr, cc = c.col + dc;
          if (rr >= 0 && rr < spec.rows() && cc >= 0 && cc < spec.cols()) ok = bev.at(rr, cc) == label;
        }
      }
      bad += !ok;
    }
  }
  CHECK(checked > 5000);
  CHECK(bad == 0);
}

TEST_CASE("pillars hold a single class") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scene s = generate_scene(seed, Difficulty::kOcclusion);
    Rng rng(seed);
    for (int i = 0; i < 2000; ++i) {
      const double x = rng.uniform(-15, 15), z = rng.uniform(0, 80);
      int owners = 0;
      for (const Box& b : s.boxes) owners += b.footprint().contains(x, z);
      CHECK(owners <= 1);
    }
  }
}
