// SPDX-License-Identifier: Apache-2.0
#include "rendbev/loss_grad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "rendbev/error.hpp"

namespace rendbev {

void LossConfig::validate() const {
  if (class_weights.size() < 2) throw ConfigError("loss config: need a weight per class (at least two)");
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("loss config: class weights must be positive");
  }
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) throw ConfigError("loss config: epsilon must lie in (0, 1e-3]");
}

double weighted_ce(std::span<const double> rendered, int target, const LossConfig& cfg) {
  if (target < 0 || static_cast<std::size_t>(target) >= rendered.size() ||
      static_cast<std::size_t>(target) >= cfg.class_weights.size()) {
    std::ostringstream os;
    os << "weighted_ce: target class " << target << " outside [0, " << rendered.size() << ")";
    throw DomainError(os.str());
  }
  return -cfg.class_weights[target] * std::log(std::max(rendered[target], cfg.epsilon));
}

std::optional<double> frame_loss(std::span<const RayIntegration> rays, std::span<const int> targets,
                                 const LossConfig& cfg) {
  if (rays.size() != targets.size()) throw ConfigError("frame_loss: rays and targets differ in length");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!rays[i].kept || targets[i] == cfg.ignore_label) continue;
    sum += weighted_ce(rays[i].rendered, targets[i], cfg);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

void backward_to_bev(const RayIntegration& ray, int target, const LossConfig& cfg, GradBuffer& out, double scale) {
  if (!ray.kept) return;
  bool touched = false;
  for_each_logit_gradient(ray, target, cfg, [&](const CellRef& cell, std::span<const double> g) {
    double* dst = out.grad.data() + cell.index(out.spec) * out.class_count;
    for (int c = 0; c < out.class_count; ++c) dst[c] += scale * g[c];
    touched = true;
  });
  if (touched) ++out.contributing_rays;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct PatchJob {
  std::size_t frame = 0;
  std::size_t patch = 0;
};

// Unscaled contributions of one patch, kept in ray order so merging is order-stable.
struct PatchResult {
  double loss_sum = 0.0;
  std::uint64_t labeled = 0;
  std::uint64_t kept = 0;
  std::vector<std::uint32_t> grad_cells;
  std::vector<double> grad_values;
  std::vector<std::uint32_t> covered_cells;
};

void run_patch(const ProbGrid& probs, const FrameBatch& fb, std::size_t patch_idx, const RenderConfig& rcfg,
               const LossConfig& lcfg, const BatchOptions& opts, bool want_grad, bool want_coverage,
               RayIntegration& scratch, PatchResult& res) {
  const int n_classes = probs.class_count;
  RayContext ctx{&probs, fb.field.get(), fb.k_to_world, fb.k_to_ref, fb.intr};
  const PatchOrigin origin = clamp_patch_origin(fb.intr, rcfg.patch_size, fb.patches[patch_idx]);
  Rng rng(splitmix64(opts.seed ^ splitmix64((static_cast<std::uint64_t>(fb.frame_index) << 32) ^ patch_idx)));
  for (int dr = 0; dr < rcfg.patch_size; ++dr) {
    for (int dc = 0; dc < rcfg.patch_size; ++dc) {
      const int row = origin.row + dr, col = origin.col + dc;
      const int target = fb.labels->at(row, col);
      if (target == lcfg.ignore_label) continue;
      ++res.labeled;
      render_ray(ctx, rcfg, col + 0.5, row + 0.5, rng, scratch);
      if (!scratch.kept) continue;
      ++res.kept;
      res.loss_sum += weighted_ce(scratch.rendered, target, lcfg);
      if (want_grad) {
        for_each_logit_gradient(scratch, target, lcfg, [&](const CellRef& cell, std::span<const double> g) {
          res.grad_cells.push_back(static_cast<std::uint32_t>(cell.index(probs.spec)));
          res.grad_values.insert(res.grad_values.end(), g.begin(), g.begin() + n_classes);
        });
      }
      if (want_coverage) {
        for (std::size_t i = 0; i < scratch.weights.size(); ++i) {
          if (scratch.cells[i].in_bounds && scratch.weights[i] > opts.coverage_min_weight) {
            res.covered_cells.push_back(static_cast<std::uint32_t>(scratch.cells[i].index(probs.spec)));
          }
        }
      }
    }
  }
}

}  // namespace

BatchResult evaluate_batch(const ProbGrid& probs, std::span<const FrameBatch> frames, const RenderConfig& rcfg,
                           const LossConfig& lcfg, const BatchOptions& opts, GradBuffer* grad,
                           std::vector<std::uint32_t>* coverage) {
  rcfg.validate();
  lcfg.validate();
  if (static_cast<int>(lcfg.class_weights.size()) != probs.class_count) {
    throw ConfigError("evaluate_batch: class weight count does not match the grid");
  }
  std::vector<PatchJob> jobs;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].labels == nullptr) throw ConfigError("evaluate_batch: frame without labels");
    if (frames[f].labels->rows != frames[f].intr.height() || frames[f].labels->cols != frames[f].intr.width()) {
      throw ConfigError("evaluate_batch: label image does not match intrinsics");
    }
    for (std::size_t p = 0; p < frames[f].patches.size(); ++p) jobs.push_back({f, p});
  }

  std::vector<PatchResult> results(jobs.size());
  const bool want_grad = grad != nullptr;
  const bool want_cov = coverage != nullptr;
  auto worker = [&](std::size_t start, std::size_t stride) {
    RayIntegration scratch;
    for (std::size_t j = start; j < jobs.size(); j += stride) {
      run_patch(probs, frames[jobs[j].frame], jobs[j].patch, rcfg, lcfg, opts, want_grad, want_cov, scratch,
                results[j]);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(1, jobs.size()));
  if (n_threads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker, t, n_threads);
  }

  BatchResult out;
  out.frame_losses.assign(frames.size(), std::nullopt);
  std::vector<double> sums(frames.size(), 0.0);
  std::vector<std::uint64_t> kept(frames.size(), 0);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    sums[jobs[j].frame] += results[j].loss_sum;
    kept[jobs[j].frame] += results[j].kept;
    out.rays_labeled += results[j].labeled;
    out.rays_kept += results[j].kept;
  }
  std::size_t supervised_frames = 0;
  double total = 0.0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (kept[f] == 0) continue;
    out.frame_losses[f] = sums[f] / static_cast<double>(kept[f]);
    total += *out.frame_losses[f];
    ++supervised_frames;
  }
  if (supervised_frames == 0) return out;
  out.loss = total / static_cast<double>(supervised_frames);

  const int n_classes = probs.class_count;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const PatchResult& r = results[j];
    if (want_grad && !r.grad_cells.empty()) {
      const double scale = 1.0 / (static_cast<double>(supervised_frames) * static_cast<double>(kept[jobs[j].frame]));
      for (std::size_t e = 0; e < r.grad_cells.size(); ++e) {
        double* dst = grad->grad.data() + static_cast<std::size_t>(r.grad_cells[e]) * n_classes;
        const double* g = r.grad_values.data() + e * n_classes;
        for (int c = 0; c < n_classes; ++c) dst[c] += scale * g[c];
      }
    }
    if (want_grad) grad->contributing_rays += r.kept;
    if (want_cov) {
      for (std::uint32_t cell : r.covered_cells) ++(*coverage)[cell];
    }
  }
  return out;
}

std::optional<double> problem_loss(const GradCheckProblem& problem, std::span<const double> logits) {
  const ProbGrid probs = softmax_probs(problem.spec, problem.class_count, logits);
  BatchOptions opts;
  opts.seed = problem.seed;
  return evaluate_batch(probs, problem.frames, problem.render, problem.loss, opts).loss;
}

GradBuffer problem_gradient(const GradCheckProblem& problem, std::span<const double> logits) {
  const ProbGrid probs = softmax_probs(problem.spec, problem.class_count, logits);
  BatchOptions opts;
  opts.seed = problem.seed;
  GradBuffer grad(problem.spec, problem.class_count);
  evaluate_batch(probs, problem.frames, problem.render, problem.loss, opts, &grad);
  return grad;
}

GradCheckReport finite_diff_check(const GradCheckProblem& problem, int n_probes, double h, Rng& rng) {
  if (n_probes < 1) throw ConfigError("finite_diff_check: need at least one probe");
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: step must be positive");
  const ProbGrid probs = softmax_probs(problem.spec, problem.class_count, problem.logits);
  BatchOptions opts;
  opts.seed = problem.seed;
  opts.coverage_min_weight = 0.0;
  GradBuffer grad(problem.spec, problem.class_count);
  std::vector<std::uint32_t> touched_count(problem.spec.cell_count(), 0);
  const BatchResult base = evaluate_batch(probs, problem.frames, problem.render, problem.loss, opts, &grad,
                                          &touched_count);
  if (!base.loss) throw NoSupervisionError("finite_diff_check: no kept rays in the problem");
  std::vector<std::size_t> touched;
  for (std::size_t i = 0; i < touched_count.size(); ++i) {
    if (touched_count[i] > 0) touched.push_back(i);
  }
  if (touched.empty()) throw NoSupervisionError("finite_diff_check: no cell received a sample");

  GradCheckReport rep;
  rep.probes = n_probes;
  rep.h = h;
  std::vector<double> logits = problem.logits;
  double sum_err = 0.0;
  for (int k = 0; k < n_probes; ++k) {
    const std::size_t cell = touched[rng.below(touched.size())];
    const int cls = static_cast<int>(rng.below(problem.class_count));
    const std::size_t idx = cell * problem.class_count + cls;
    const double orig = logits[idx];
    logits[idx] = orig + h;
    const double lp = *problem_loss(problem, logits);
    logits[idx] = orig - h;
    const double lm = *problem_loss(problem, logits);
    logits[idx] = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = grad.grad[idx];
    const double err = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8);
    sum_err += err;
    if (err >= rep.max_rel_err) {
      rep.max_rel_err = err;
      rep.worst_row = static_cast<int>(cell / problem.spec.cols());
      rep.worst_col = static_cast<int>(cell % problem.spec.cols());
      rep.worst_class = cls;
    }
  }
  rep.mean_rel_err = sum_err / n_probes;
  return rep;
}

}  // namespace rendbev
