// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <memory>

#include "rendbev/error.hpp"
#include "rendbev/renderer.hpp"
#include "rendbev/scene_sim.hpp"

using namespace rendbev;

namespace {

// Opaque ball used to place density at a chosen point.
class BallField : public DensityField {
 public:
  BallField(Vec3 c, double r, double s) : c_(c), r_(r), s_(s) {}
  double density(const Vec3& x) const override { return (x - c_).norm() <= r_ ? s_ : 0.0; }

 private:
  Vec3 c_;
  double r_, s_;
};

RenderConfig no_jitter(int m = 64) {
  RenderConfig c;
  c.m = m;
  c.jitter = false;
  return c;
}

const Intrinsics kIntr = Intrinsics::centered(160, 320, 96);

}  // namespace

TEST_CASE("render config validation") {
  RenderConfig c;
  CHECK_NOTHROW(c.validate());
  c.m = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RenderConfig{};
  c.z_near = 90;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RenderConfig{};
  c.tau = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RenderConfig{};
  c.patch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("default sampling constants") {
  const RenderConfig c;
  CHECK(c.m == 64);
  CHECK(c.z_near == 3.0);
  CHECK(c.z_far == 80.0);
}

TEST_CASE("stratified disparity sampling") {
  Rng rng(1);
  SUBCASE("two samples between 3 and 80 m") {
    RenderConfig c = no_jitter(2);
    const auto d = sample_ray_depths(c, rng);
    REQUIRE(d.size() == 2);
    CHECK(std::abs(d[0] - 3.9506) < 1e-3);
    CHECK(std::abs(d[1] - 10.7864) < 1e-3);
    CHECK(std::abs(1.0 / d[1] - 0.092708) < 1e-6);
    CHECK(std::abs(1.0 / d[0] - 0.253125) < 1e-6);
  }
  SUBCASE("reciprocals are equally spaced without jitter") {
    for (int m : {2, 7, 64, 129}) {
      const auto d = sample_ray_depths(no_jitter(m), rng);
      const double step = 1.0 / d[0] - 1.0 / d[1];
      for (int i = 1; i + 1 < m; ++i) CHECK(std::abs((1.0 / d[i] - 1.0 / d[i + 1]) - step) < 1e-9);
    }
  }
  SUBCASE("jittered samples are reproducible, ascending and in range") {
    RenderConfig c;
    Rng a(42), b(42);
    const auto da = sample_ray_depths(c, a), db = sample_ray_depths(c, b);
    CHECK(da == db);
    for (std::size_t i = 0; i < da.size(); ++i) {
      CHECK(da[i] >= c.z_near);
      CHECK(da[i] <= c.z_far);
      if (i) CHECK(da[i] > da[i - 1]);
    }
  }
}

TEST_CASE("interval lengths") {
  const std::vector<double> d{3.0, 5.0, 10.0};
  const auto delta = depth_deltas(d, 80.0);
  CHECK(delta == std::vector<double>{2.0, 5.0, 70.0});
}

TEST_CASE("density integration") {
  SUBCASE("empty space") {
    const auto r = integrate_ray(std::vector<double>(5, 0.0), std::vector<double>(5, 1.0));
    for (int i = 0; i < 5; ++i) {
      CHECK(r.alphas[i] == 0.0);
      CHECK(r.transmittances[i] == 1.0);
      CHECK(r.weights[i] == 0.0);
    }
    CHECK(r.residual_transmittance == 1.0);
  }
  SUBCASE("opaque first sample") {
    const auto r = integrate_ray(std::vector<double>{50, 50}, std::vector<double>{1, 1});
    CHECK(r.alphas[0] == doctest::Approx(1.0));
    CHECK(r.alphas[0] < 1.0);
    CHECK(r.weights[0] == doctest::Approx(1.0));
    CHECK(r.weights[1] < 1e-15);
  }
  SUBCASE("hand-evaluated half density") {
    const auto r = integrate_ray(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 1});
    CHECK(std::abs(r.alphas[0] - 0.393469) < 1e-6);
    CHECK(std::abs(r.alphas[1] - 0.393469) < 1e-6);
    CHECK(std::abs(r.weights[0] - 0.393469) < 1e-6);
    CHECK(std::abs(r.weights[1] - 0.238651) < 1e-6);
  }
}

TEST_CASE("compositing") {
  CHECK(render_class_probs(std::vector<double>{1.0}, std::vector<double>{0.2, 0.8}, 2) ==
        std::vector<double>{0.2, 0.8});
  CHECK(render_class_probs(std::vector<double>{0.0, 0.0}, std::vector<double>{0.2, 0.8, 0.5, 0.5}, 2) ==
        std::vector<double>{0.0, 0.0});
  const auto l = render_class_probs(std::vector<double>{0.393469, 0.238651}, std::vector<double>{1, 0, 0, 1}, 2);
  CHECK(l[0] == doctest::Approx(0.393469));
  CHECK(l[1] == doctest::Approx(0.238651));
  CHECK(render_scalar(std::vector<double>{0.393469, 0.238651}, std::vector<double>{0, 1}) ==
        doctest::Approx(0.238651));
  CHECK(render_scalar(std::vector<double>{1.0 - 1e-12, 0.0}, std::vector<double>{1, 1}) == doctest::Approx(1.0));
  CHECK(render_scalar(std::vector<double>{0.3, 0.2}, std::vector<double>{0, 0}) == 0.0);
}

TEST_CASE("vacuum patch") {
  const BevGrid grid(BevSpec::desk_default(), 5);
  const ProbGrid probs = softmax_probs(grid);
  const FieldPtr f = empty_field();
  const RayContext ctx{&probs, f.get(), Pose::identity(), Pose::identity(), kIntr};
  Rng rng(3);
  const auto rays = render_patch(ctx, {10, 10}, RenderConfig{}, rng);
  CHECK(rays.size() == 256);
  for (const auto& r : rays) {
    double s = 0.0;
    for (double w : r.weights) s += w;
    CHECK(s == 0.0);
    CHECK(r.oob == 0.0);
    CHECK(r.kept);
    for (double v : r.rendered) CHECK(v == 0.0);
  }
}

TEST_CASE("density outside the BEV rectangle is filtered") {
  const BevGrid grid(BevSpec::desk_default(), 5);
  const ProbGrid probs = softmax_probs(grid);
  const Vec3 p(0.0, 0.5, 40.0);  // beyond the 25.6 m deep grid
  const auto f = std::make_shared<BallField>(p, 1.0, 50.0);
  const RayContext ctx{&probs, f.get(), Pose::identity(), Pose::identity(), kIntr};
  const auto uv = kIntr.project(p);
  Rng rng(0);
  RayIntegration ray;
  render_ray(ctx, no_jitter(), uv.x(), uv.y(), rng, ray);
  CHECK(ray.oob > 0.99);
  CHECK_FALSE(ray.kept);
}

TEST_CASE("opaque ground point renders its cell, against a per-ray oracle") {
  Rng lrng(17);
  BevGrid grid(BevSpec::desk_default(), 5);
  for (float& v : grid.logits) v = static_cast<float>(lrng.uniform(-2, 2));
  const ProbGrid probs = softmax_probs(grid);
  const Pose k_to_world = Pose::translation({0.3, 0.0, -1.0});
  const Pose ref = Pose::identity();
  const Pose k_to_ref = compose_relative_pose(k_to_world, ref);
  const Vec3 target(1.1, 1.55, 12.3);  // world point on the ground
  const auto f = std::make_shared<BallField>(target, 0.6, 50.0);
  const RayContext ctx{&probs, f.get(), k_to_world, k_to_ref, kIntr};
  const auto uv = kIntr.project(k_to_world.apply_inverse(target));
  const RenderConfig cfg = no_jitter();
  Rng rng(0);
  RayIntegration ray;
  render_ray(ctx, cfg, uv.x(), uv.y(), rng, ray);

  // Independent recomputation.
  const Ray cam = pixel_ray(kIntr, uv.x(), uv.y());
  std::vector<double> expect(5, 0.0);
  double T = 1.0;
  const double dn = 1.0 / cfg.z_near, df = 1.0 / cfg.z_far;
  std::vector<double> z(cfg.m);
  for (int j = 0; j < cfg.m; ++j) z[j] = 1.0 / (df + (j + 0.5) / cfg.m * (dn - df));
  std::sort(z.begin(), z.end());
  for (int j = 0; j < cfg.m; ++j) {
    const double zn = j + 1 < cfg.m ? z[j + 1] : cfg.z_far;
    const double delta = (zn - z[j]) / cam.direction.z();
    const Vec3 xk = cam.direction * (z[j] / cam.direction.z());
    const Vec3 xw = k_to_world.apply(xk);
    const double sigma = f->density(xw);
    const double alpha = 1.0 - std::exp(-sigma * delta);
    const Vec3 xr = ref.apply_inverse(xw);
    const CellRef c = world_to_cell(grid.spec, {xr.x(), xr.z()});
    if (c.in_bounds && xr.z() >= 0.0) {
      for (int k = 0; k < 5; ++k) expect[k] += T * alpha * probs.cell(c.index(grid.spec))[k];
    }
    T *= 1.0 - alpha;
  }
  const CellRef hit = world_to_cell(grid.spec, {target.x(), target.z()});
  for (int k = 0; k < 5; ++k) {
    CHECK(std::abs(ray.rendered[k] - expect[k]) < 1e-9);
    CHECK(std::abs(ray.rendered[k] - probs.cell(hit.index(grid.spec))[k]) < 0.05);
  }
  CHECK(ray.kept);
}

TEST_CASE("per-ray invariants on scene rays") {
  const Scene s = generate_scene(2, Difficulty::kStatic);
  const FieldPtr f = scene_field(s);
  BevGrid grid(BevSpec::desk_default(), 5);
  Rng lrng(5);
  for (float& v : grid.logits) v = static_cast<float>(lrng.uniform(-3, 3));
  const ProbGrid probs = softmax_probs(grid);
  const auto poses = straight_trajectory(20, 0.5, 0.0);
  Rng rng(9);
  for (int k : {0, 3, 12, 19}) {
    const RayContext ctx{&probs, f.get(), poses[k], compose_relative_pose(poses[k], poses[0]), kIntr};
    const auto rays = render_patch(ctx, {static_cast<int>(rng.below(300)), static_cast<int>(rng.below(80))},
                                   RenderConfig{}, rng);
    for (const auto& r : rays) {
      double sum_l = 0.0, sum_w = 0.0, prod = 1.0;
      for (double v : r.rendered) sum_l += v;
      for (std::size_t i = 0; i < r.weights.size(); ++i) {
        CHECK(r.alphas[i] >= 0.0);
        CHECK(r.alphas[i] < 1.0);
        if (i) CHECK(r.transmittances[i] <= r.transmittances[i - 1]);
        sum_w += r.weights[i];
        prod *= 1.0 - r.alphas[i];
      }
      CHECK(std::abs(sum_w - (1.0 - prod)) < 1e-6);
      CHECK(std::abs(sum_l + r.residual_transmittance + r.oob - 1.0) < 1e-5);
      CHECK(r.kept == (r.oob <= 0.2));
    }
  }
}

TEST_CASE("filtering ignores the logits and rendering is pure") {
  const Scene s = generate_scene(3, Difficulty::kStatic);
  const FieldPtr f = scene_field(s);
  BevGrid a(BevSpec::desk_default(), 5), b = a;
  Rng lrng(8);
  for (float& v : b.logits) v = static_cast<float>(lrng.uniform(-5, 5));
  const ProbGrid pa = softmax_probs(a), pb = softmax_probs(b);
  const auto poses = straight_trajectory(10, 0.5, 0.0);
  const Pose k_to_ref = compose_relative_pose(poses[6], poses[0]);
  Rng r1(4), r2(4), r3(4);
  const auto ra = render_patch({&pa, f.get(), poses[6], k_to_ref, kIntr}, {100, 40}, RenderConfig{}, r1);
  const auto rb = render_patch({&pb, f.get(), poses[6], k_to_ref, kIntr}, {100, 40}, RenderConfig{}, r2);
  const auto rb2 = render_patch({&pb, f.get(), poses[6], k_to_ref, kIntr}, {100, 40}, RenderConfig{}, r3);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].kept == rb[i].kept);
    CHECK(ra[i].oob == rb[i].oob);
    CHECK(rb[i].rendered == rb2[i].rendered);
    CHECK(rb[i].weights == rb2[i].weights);
  }
}

TEST_CASE("finer sampling does not worsen first-hit depth") {
  const Scene s = generate_scene(6, Difficulty::kStatic);
  const FieldPtr f = scene_field(s);
  const BevGrid grid(BevSpec::desk_default(), 5);
  const ProbGrid probs = softmax_probs(grid);
  const RayContext ctx{&probs, f.get(), Pose::identity(), Pose::identity(), kIntr};
  double prev = 1e9;
  for (int m : {16, 32, 64}) {
    double err = 0.0;
    int n = 0;
    for (int v = 50; v < 96; v += 9) {
      for (int u = 5; u < 320; u += 31) {
        Rng rng(0);
        RayIntegration ray;
        render_ray(ctx, no_jitter(m), u + 0.5, v + 0.5, rng, ray);
        const double truth = raycast_depth(s, Pose::identity(), kIntr, u + 0.5, v + 0.5);
        double first = 80.0;
        for (std::size_t i = 0; i < ray.sigmas.size(); ++i) {
          if (ray.sigmas[i] > 0) {
            first = ray.depths[i];
            break;
          }
        }
        err += std::abs(first - truth);
        ++n;
      }
    }
    err /= n;
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
}

TEST_CASE("patch origins are clamped into the image") {
  CHECK(clamp_patch_origin(kIntr, 16, {-5, -3}) == PatchOrigin{0, 0});
  CHECK(clamp_patch_origin(kIntr, 16, {310, 90}) == PatchOrigin{304, 80});
  CHECK(clamp_patch_origin(kIntr, 16, {20, 30}) == PatchOrigin{20, 30});
}
