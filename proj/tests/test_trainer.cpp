// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "rendbev/error.hpp"
#include "rendbev/experiment.hpp"
#include "rendbev/trainer.hpp"

using namespace rendbev;

namespace {

const Intrinsics kIntr = Intrinsics::centered(128, 256, 128);

ExperimentConfig small_config(Difficulty d, int iterations) {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.scene_seed = 1;
  c.train.seed = 1;
  c.difficulty = d;
  c.train.iterations = iterations;
  return c;
}

}  // namespace

TEST_CASE("offset policy") {
  const FrameOffsetPolicy p = FrameOffsetPolicy::standard();
  CHECK(p.adjacent == std::vector<int>{-1, 1});
  REQUIRE(p.future_ranges.size() == 5);
  CHECK(p.future_ranges.front() == std::pair<int, int>{5, 11});
  CHECK(p.future_ranges.back() == std::pair<int, int>{33, 39});
  CHECK_NOTHROW(p.validate());
  FrameOffsetPolicy bad = p;
  bad.future_ranges.push_back({10, 14});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.future_ranges[0].first = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.momentum = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.weight_decay = -1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.patches_total = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  const TrainConfig full = TrainConfig::full_scale();
  CHECK(full.lr == 0.005);
  CHECK(full.momentum == 0.9);
  CHECK(full.weight_decay == 1e-5);
  CHECK(full.nesterov);
  CHECK(full.patches_total == 192);
  CHECK(full.patch_size == 16);
}

TEST_CASE("supervision sampling") {
  const FrameOffsetPolicy p = FrameOffsetPolicy::standard();
  SUBCASE("all seven frames with balanced counts") {
    Rng rng(3);
    const auto draws = sample_supervision(40, 0, p, 192, kIntr, 16, rng);
    CHECK(draws.size() == 192);
    std::map<int, int> per_frame;
    for (const auto& d : draws) {
      ++per_frame[d.frame];
      CHECK(d.origin.col >= 0);
      CHECK(d.origin.col <= 256 - 16);
      CHECK(d.origin.row >= 0);
      CHECK(d.origin.row <= 128 - 16);
    }
    CHECK(per_frame.size() == 6);  // r - 1 is unreachable from frame 0
    int lo = 1000, hi = 0;
    for (auto [f, n] : per_frame) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
    Rng rng2(5);
    const auto mid = sample_supervision(60, 10, p, 192, kIntr, 16, rng2);
    std::map<int, int> counts;
    for (const auto& d : mid) ++counts[d.frame];
    CHECK(counts.size() == 7);
    int total = 0;
    lo = 1000;
    hi = 0;
    for (auto [f, n] : counts) {
      total += n;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
      const int off = f - 10;
      const bool ok = off == -1 || off == 1 || (off >= 5 && off <= 39);
      CHECK(ok);
    }
    CHECK(total == 192);
    CHECK(hi - lo <= 1);
  }
  SUBCASE("future frames disabled") {
    FrameOffsetPolicy adj = p;
    adj.enabled_future = false;
    Rng rng(1);
    for (const auto& d : sample_supervision(40, 5, adj, 64, kIntr, 16, rng)) CHECK((d.frame == 4 || d.frame == 6));
  }
  SUBCASE("unreachable ranges are dropped") {
    Rng rng(1);
    std::set<int> frames;
    for (const auto& d : sample_supervision(12, 0, p, 50, kIntr, 16, rng)) frames.insert(d.frame);
    for (int f : frames) CHECK(((f == 1) || (f >= 5 && f <= 11)));
  }
  SUBCASE("nothing reachable") {
    FrameOffsetPolicy adj = p;
    adj.enabled_future = false;
    adj.adjacent = {5};
    Rng rng(1);
    CHECK_THROWS_AS(sample_supervision(3, 0, adj, 10, kIntr, 16, rng), ConfigError);
  }
  SUBCASE("deterministic per seed") {
    Rng a(77), b(77);
    CHECK(sample_supervision(40, 0, p, 192, kIntr, 16, a) == sample_supervision(40, 0, p, 192, kIntr, 16, b));
  }
}

TEST_CASE("sgd steps") {
  const BevSpec spec(2, 2, 1.0, 0, 0);
  TrainConfig cfg;
  cfg.lr = 0.5;
  SUBCASE("zero gradient, zero decay") {
    BevGrid g(spec, 3);
    for (std::size_t i = 0; i < g.logits.size(); ++i) g.logits[i] = static_cast<float>(i) * 0.25f;
    const BevGrid before = g;
    cfg.weight_decay = 0.0;
    SgdState s;
    sgd_step(g, GradBuffer(spec, 3), s, cfg);
    CHECK(g.logits == before.logits);
  }
  SUBCASE("plain gradient descent without momentum") {
    BevGrid g(spec, 3);
    GradBuffer grad(spec, 3);
    Rng rng(2);
    for (double& v : grad.grad) v = rng.uniform(-1, 1);
    for (float& v : g.logits) v = static_cast<float>(rng.uniform(-1, 1));
    const BevGrid before = g;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    SgdState s;
    sgd_step(g, grad, s, cfg);
    for (std::size_t i = 0; i < g.logits.size(); ++i) {
      CHECK(g.logits[i] == static_cast<float>(static_cast<double>(before.logits[i]) - cfg.lr * grad.grad[i]));
    }
  }
  SUBCASE("two Nesterov steps with constant gradient") {
    BevGrid g(BevSpec(1, 1, 1.0, 0, 0), 2);
    GradBuffer grad(g.spec, 2);
    grad.grad = {1.0, -2.0};
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    cfg.lr = 0.125;
    SgdState s;
    sgd_step(g, grad, s, cfg);
    sgd_step(g, grad, s, cfg);
    // v1 = g, step1 = g + 0.9 g; v2 = 1.9 g, step2 = g + 0.9 * 1.9 g.
    const double total = 0.125 * ((1 + 0.9) + (1 + 0.9 * 1.9));
    CHECK(g.logits[0] == doctest::Approx(-total * 1.0).epsilon(1e-6));
    CHECK(g.logits[1] == doctest::Approx(total * 2.0).epsilon(1e-6));
  }
  SUBCASE("weight decay enters the gradient") {
    BevGrid g(BevSpec(1, 1, 1.0, 0, 0), 2);
    g.logits = {2.0f, -2.0f};
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.1;
    SgdState s;
    sgd_step(g, GradBuffer(g.spec, 2), s, cfg);
    CHECK(g.logits[0] == doctest::Approx(2.0 - 0.5 * 0.2));
  }
  SUBCASE("non-finite gradient aborts") {
    BevGrid g(spec, 3);
    GradBuffer grad(spec, 3);
    grad.grad[4] = std::nan("");
    SgdState s;
    CHECK_THROWS_AS(sgd_step(g, grad, s, cfg), NumericError);
  }
}

TEST_CASE("zero iterations leave the uniform grid") {
  const ExperimentConfig c = small_config(Difficulty::kFlat, 0);
  const Dataset d = generate_dataset(c);
  const RunOutcome o = run_training(d, c);
  CHECK(o.train.history.empty());
  for (auto v : o.prediction.data) CHECK(v == 0);
}

TEST_CASE("flat scene recovers the ground layout") {
  const ExperimentConfig c = small_config(Difficulty::kFlat, 200);
  const Dataset d = generate_dataset(c);
  const RunOutcome o = run_training(d, c);
  CHECK(o.train.history.size() == 200);
  for (const auto& h : o.train.history) {
    if (h.loss) CHECK(std::isfinite(*h.loss));
  }
  const MaskGrid sup = o.train.supervised_mask();
  std::size_t n = 0, ok = 0;
  for (std::size_t i = 0; i < sup.data.size(); ++i) {
    if (!sup.data[i]) continue;
    ++n;
    ok += o.prediction.data[i] == d.gt_bev_full.data[i];
  }
  MESSAGE("flat accuracy on supervised cells: ", static_cast<double>(ok) / n);
  CHECK(n > 1000);
  CHECK(static_cast<double>(ok) >= 0.95 * n);
}

TEST_CASE("training is deterministic for a fixed seed") {
  ExperimentConfig c = small_config(Difficulty::kStatic, 15);
  c.frames = 20;
  c.train.patches_total = 48;
  const Dataset d = generate_dataset(c);
  const RunOutcome a = run_training(d, c);
  const RunOutcome b = run_training(d, c);
  REQUIRE(a.train.history.size() == b.train.history.size());
  for (std::size_t i = 0; i < a.train.history.size(); ++i) {
    CHECK(a.train.history[i].loss == b.train.history[i].loss);
    CHECK(a.train.history[i].kept_fraction == b.train.history[i].kept_fraction);
  }
  CHECK(a.train.grid.logits == b.train.grid.logits);
  c.train.threads = 3;
  const RunOutcome t = run_training(d, c);
  CHECK(t.train.grid.logits == a.train.grid.logits);
}

TEST_CASE("smoothed loss decreases on a static scene") {
  ExperimentConfig c = small_config(Difficulty::kStatic, 300);
  c.train.patches_total = 96;
  const Dataset d = generate_dataset(c);
  const RunOutcome o = run_training(d, c);
  // Means over consecutive 50-iteration windows with their standard errors.
  std::vector<double> mean, se;
  for (std::size_t start = 0; start + 50 <= o.train.history.size(); start += 50) {
    double s = 0.0, s2 = 0.0;
    int n = 0;
    for (std::size_t i = start; i < start + 50; ++i) {
      if (!o.train.history[i].loss) continue;
      s += *o.train.history[i].loss;
      s2 += *o.train.history[i].loss * *o.train.history[i].loss;
      ++n;
    }
    REQUIRE(n > 1);
    mean.push_back(s / n);
    se.push_back(std::sqrt(std::max(0.0, (s2 - s * s / n) / (n - 1)) / n));
  }
  // Once the descent flattens, frame-sampling noise dominates a 50-iteration
  // window, so each step is checked within two standard errors.
  for (std::size_t i = 1; i < mean.size(); ++i) {
    CHECK(mean[i] <= mean[i - 1] + 2.0 * std::hypot(se[i], se[i - 1]));
  }
  CHECK(mean.back() < mean.front());
  CHECK(mean.back() < 0.5 * *o.train.history.front().loss);
}

TEST_CASE("future frames supervise more cells") {
  ExperimentConfig c = small_config(Difficulty::kStatic, 30);
  const Dataset d = generate_dataset(c);
  const RunOutcome full = run_training(d, c);
  c.policy.enabled_future = false;
  const RunOutcome adj = run_training(d, c);
  CHECK(full.supervised_cells > adj.supervised_cells);
}

TEST_CASE("occluded ground is reached only with per-frame fields") {
  ExperimentConfig c = small_config(Difficulty::kOcclusion, 0);
  const Dataset d = generate_dataset(c);
  const auto occ = occluder_index(d.scene);
  REQUIRE(occ.has_value());
  const MaskGrid shadow = box_shadow(d.scene, *occ, d.bev, d.poses[0]);
  const Footprint fp = d.scene.boxes[*occ].footprint();
  MaskGrid q = shadow;  // occluded ground, excluding the box itself
  for (int r = 0; r < d.bev.rows(); ++r) {
    for (int col = 0; col < d.bev.cols(); ++col) {
      const GroundPoint p = cell_center(d.bev, r, col);
      if (fp.contains(p.x, p.z)) q.at(r, col) = 0;
    }
  }
  const FieldPtr truth = scene_field(d.scene);
  const BevGrid grid(d.bev, d.scene.class_count());
  const ProbGrid probs = softmax_probs(grid);

  // Weight landing in Q from future frames, split by whether the sample is real matter.
  auto weight_in_q = [&](FieldPolicy policy, double& real, double& phantom) {
    ExperimentConfig fc = c;
    fc.field = policy;
    const TrainData td = build_train_data(d, fc);
    real = phantom = 0.0;
    Rng rng(1);
    for (int k = 5; k < d.frame_count(); k += 3) {
      const RayContext ctx{&probs, td.fields[k].get(), d.poses[k], compose_relative_pose(d.poses[k], d.poses[0]),
                           d.camera};
      for (int row = 0; row + 16 <= d.camera.height(); row += 16) {
        for (int col = 0; col + 16 <= d.camera.width(); col += 16) {
          for (const auto& ray : render_patch(ctx, {col, row}, fc.render, rng)) {
            if (!ray.kept) continue;
            const Ray cam = pixel_ray(d.camera, ray.u, ray.v);
            for (std::size_t i = 0; i < ray.weights.size(); ++i) {
              if (ray.weights[i] < 1e-3 || !ray.cells[i].in_bounds) continue;
              if (!q.data[ray.cells[i].index(d.bev)]) continue;
              const Vec3 xw = d.poses[k].apply(cam.direction * (ray.depths[i] / cam.direction.z()));
              (query_density(*truth, xw) > 0 ? real : phantom) += ray.weights[i];
            }
          }
        }
      }
    }
  };
  double real_pf, phantom_pf, real_sh, phantom_sh;
  weight_in_q(FieldPolicy::kPerFrame, real_pf, phantom_pf);
  weight_in_q(FieldPolicy::kReferenceShadow, real_sh, phantom_sh);
  MESSAGE("per-frame real/phantom ", real_pf, "/", phantom_pf, ", shadow real/phantom ", real_sh, "/", phantom_sh);
  CHECK(real_pf > 0.0);
  CHECK(phantom_pf == 0.0);
  CHECK(phantom_sh > real_sh);
}
