// SPDX-License-Identifier: Apache-2.0
#include "rendbev/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "rendbev/error.hpp"

namespace rendbev {

FrameOffsetPolicy FrameOffsetPolicy::standard() {
  FrameOffsetPolicy p;
  for (int start = 5; start <= 33; start += 7) p.future_ranges.emplace_back(start, start + 6);
  return p;
}

void FrameOffsetPolicy::validate() const {
  auto ranges = future_ranges;
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].first < 2) throw ConfigError("offset policy: future ranges must start at +2 or later");
    if (ranges[i].second < ranges[i].first) throw ConfigError("offset policy: empty future range");
    if (i > 0 && ranges[i].first <= ranges[i - 1].second) {
      throw ConfigError("offset policy: future ranges overlap");
    }
  }
  for (int a : adjacent) {
    if (a == 0) throw ConfigError("offset policy: offset 0 is the reference frame itself");
  }
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.lr = 0.005;
  c.momentum = 0.9;
  c.weight_decay = 1e-5;
  c.nesterov = true;
  c.patches_total = 192;
  c.patch_size = 16;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be non-negative");
  if (iterations < 0) throw ConfigError("train config: iterations must be non-negative");
  if (patches_total < 1) throw ConfigError("train config: patches_total must be at least 1");
  if (patch_size < 1) throw ConfigError("train config: patch_size must be at least 1");
  if (threads < 1) throw ConfigError("train config: threads must be at least 1");
}

std::vector<SupervisionPatch> sample_supervision(int n_frames, int r, const FrameOffsetPolicy& policy,
                                                 int patches_total, const Intrinsics& intr, int patch_size,
                                                 Rng& rng) {
  policy.validate();
  if (r < 0 || r >= n_frames) throw ConfigError("sample_supervision: reference index outside the sequence");
  if (patches_total < 1) throw ConfigError("sample_supervision: patches_total must be at least 1");
  if (patch_size > intr.width() || patch_size > intr.height()) {
    throw ConfigError("sample_supervision: patch larger than the image");
  }
  std::vector<int> frames;
  for (int a : policy.adjacent) {
    if (r + a >= 0 && r + a < n_frames) frames.push_back(r + a);
  }
  if (policy.enabled_future) {
    for (const auto& [lo, hi] : policy.future_ranges) {
      const int first = std::max(r + lo, 0);
      const int last = std::min(r + hi, n_frames - 1);
      if (first > last) continue;
      frames.push_back(static_cast<int>(rng.between(first, last)));
    }
  }
  if (frames.empty()) {
    std::ostringstream os;
    os << "sample_supervision: no frame reachable from reference " << r << " in a sequence of " << n_frames;
    throw ConfigError(os.str());
  }

  // Balanced split; which frames receive the remainder is random.
  const int n = static_cast<int>(frames.size());
  std::vector<int> counts(n, patches_total / n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  for (int i = 0; i < patches_total % n; ++i) ++counts[order[i]];

  std::vector<SupervisionPatch> out;
  out.reserve(patches_total);
  const int max_col = intr.width() - patch_size;
  const int max_row = intr.height() - patch_size;
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < counts[i]; ++p) {
      PatchOrigin o;
      o.col = static_cast<int>(rng.between(0, max_col));
      o.row = static_cast<int>(rng.between(0, max_row));
      out.push_back({frames[i], o});
    }
  }
  return out;
}

void sgd_step(BevGrid& grid, const GradBuffer& grad, SgdState& state, const TrainConfig& cfg) {
  const std::size_t n = grid.logits.size();
  if (grad.grad.size() != n) throw ConfigError("sgd_step: gradient shape does not match the grid");
  if (state.velocity.size() != n) state.velocity.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grad.grad[i])) {
      std::ostringstream os;
      os << "sgd_step: non-finite gradient at logit " << i << " (cell " << i / grid.class_count << ")";
      throw NumericError(os.str());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = grid.logits[i];
    const double g = grad.grad[i] + cfg.weight_decay * theta;
    double& v = state.velocity[i];
    v = cfg.momentum * v + g;
    const double step = cfg.nesterov ? g + cfg.momentum * v : v;
    const double updated = theta - cfg.lr * step;
    if (!std::isfinite(updated) || std::abs(updated) > 3.0e38) {
      throw NumericError("sgd_step: logit update overflowed");
    }
    grid.logits[i] = static_cast<float>(updated);
  }
}

void TrainData::validate() const {
  const std::size_t n = poses.size();
  if (n < 2) throw ConfigError("train data: need at least two frames");
  if (labels.size() != n || fields.size() != n) throw ConfigError("train data: per-frame arrays differ in length");
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k].rows != intr.height() || labels[k].cols != intr.width()) {
      std::ostringstream os;
      os << "train data: label image " << k << " does not match the intrinsics";
      throw ConfigError(os.str());
    }
    if (!fields[k]) throw ConfigError("train data: missing density field");
  }
}

MaskGrid TrainResult::supervised_mask() const {
  MaskGrid m(grid.spec.rows(), grid.spec.cols(), 0);
  for (std::size_t i = 0; i < coverage.size(); ++i) m.data[i] = coverage[i] > 0 ? 1 : 0;
  return m;
}

TrainResult train_bev(const TrainData& data, int reference, const BevSpec& spec, int class_count,
                      const RenderConfig& render, const LossConfig& loss, const TrainConfig& train,
                      const FrameOffsetPolicy& policy) {
  data.validate();
  train.validate();
  policy.validate();
  RenderConfig rcfg = render;
  rcfg.patch_size = train.patch_size;
  rcfg.validate();
  loss.validate();
  if (reference < 0 || reference >= data.frame_count()) throw ConfigError("train: reference index out of range");

  TrainResult result;
  result.grid = BevGrid(spec, class_count);
  result.coverage.assign(spec.cell_count(), 0);
  result.history.reserve(train.iterations);
  Rng rng(train.seed);
  SgdState state;
  GradBuffer grad(spec, class_count);
  const Pose& ref_pose = data.poses[reference];
  BatchOptions opts;
  opts.threads = train.threads;
  bool any_supervised = false;

  const auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < train.iterations; ++it) {
    const auto draws =
        sample_supervision(data.frame_count(), reference, policy, train.patches_total, data.intr, train.patch_size, rng);
    std::vector<FrameBatch> batches;
    for (const SupervisionPatch& sp : draws) {
      if (batches.empty() || batches.back().frame_index != sp.frame) {
        FrameBatch fb;
        fb.field = data.fields[sp.frame];
        fb.k_to_world = data.poses[sp.frame];
        fb.k_to_ref = compose_relative_pose(data.poses[sp.frame], ref_pose);
        fb.intr = data.intr;
        fb.labels = &data.labels[sp.frame];
        fb.frame_index = sp.frame;
        batches.push_back(std::move(fb));
      }
      batches.back().patches.push_back(sp.origin);
    }
    opts.seed = rng.fork_seed();
    const ProbGrid probs = softmax_probs(result.grid);
    grad.clear();
    const BatchResult br = evaluate_batch(probs, batches, rcfg, loss, opts, &grad, &result.coverage);
    IterationStats stats;
    stats.kept_fraction = br.rays_labeled ? static_cast<double>(br.rays_kept) / br.rays_labeled : 0.0;
    if (br.loss) {
      if (!std::isfinite(*br.loss)) throw NumericError("train: non-finite loss");
      stats.loss = br.loss;
      sgd_step(result.grid, grad, state, train);
      any_supervised = true;
    }
    result.history.push_back(stats);
  }
  const auto t1 = std::chrono::steady_clock::now();
  if (train.iterations > 0) {
    result.seconds_per_iteration = std::chrono::duration<double>(t1 - t0).count() / train.iterations;
    if (!any_supervised) throw NoSupervisionError("train: every ray of every iteration was filtered");
  }
  return result;
}

}  // namespace rendbev
