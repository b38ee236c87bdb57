// SPDX-License-Identifier: Apache-2.0
//
// Class-weighted cross-entropy on rendered probabilities and its analytic
// gradient with respect to the BEV logits. Density is frozen, so gradient
// flows only through the sampled cell probabilities.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rendbev/bev_grid.hpp"
#include "rendbev/density_field.hpp"
#include "rendbev/raster.hpp"
#include "rendbev/renderer.hpp"
#include "rendbev/rng.hpp"

namespace rendbev {

struct LossConfig {
  std::vector<double> class_weights;  ///< one positive weight per class
  double epsilon = 1e-6;              ///< log clamp floor; no gradient below it
  int ignore_label = 255;             ///< targets with this label carry no supervision

  static LossConfig uniform(int class_count) { return {std::vector<double>(class_count, 1.0)}; }
  void validate() const;
};

/// Dense d(loss)/d(logit) accumulator shaped like BevGrid::logits.
struct GradBuffer {
  BevSpec spec;
  int class_count = 0;
  std::vector<double> grad;
  std::uint64_t contributing_rays = 0;

  GradBuffer() = default;
  GradBuffer(const BevSpec& s, int c)
      : spec(s), class_count(c), grad(s.cell_count() * static_cast<std::size_t>(c), 0.0) {}
  void clear() {
    std::fill(grad.begin(), grad.end(), 0.0);
    contributing_rays = 0;
  }
};

/// -w_t ln(max(p_t, epsilon)). Throws DomainError for a target outside [0, C).
double weighted_ce(std::span<const double> rendered, int target, const LossConfig& cfg);

/// Mean weighted CE over kept rays whose target is not ignored; nullopt when
/// no such ray exists.
std::optional<double> frame_loss(std::span<const RayIntegration> rays, std::span<const int> targets,
                                 const LossConfig& cfg);

/// Calls sink(cell, g) for every in-bounds, weight-bearing sample of `ray`,
/// where g[c] = d weighted_ce / d logit_c of that cell's contribution.
template <typename Sink>
void for_each_logit_gradient(const RayIntegration& ray, int target, const LossConfig& cfg, Sink&& sink) {
  const int n_classes = static_cast<int>(ray.rendered.size());
  const double pt = ray.rendered[target];
  if (!(pt > cfg.epsilon)) return;  // clamped: flat loss
  const double dl_dpt = -cfg.class_weights[target] / pt;
  double g[256];
  for (std::size_t i = 0; i < ray.weights.size(); ++i) {
    const double w = ray.weights[i];
    if (w == 0.0 || !ray.cells[i].in_bounds) continue;
    const double* p = ray.probs.data() + i * n_classes;
    const double coeff = dl_dpt * w * p[target];
    for (int c = 0; c < n_classes; ++c) g[c] = -coeff * p[c];
    g[target] += coeff;
    sink(ray.cells[i], std::span<const double>(g, n_classes));
  }
}

/// Adds scale * d weighted_ce / d logits of one kept ray into `out`.
void backward_to_bev(const RayIntegration& ray, int target, const LossConfig& cfg, GradBuffer& out,
                     double scale = 1.0);

/// Supervision from one target frame: its geometry, labels, and patches.
struct FrameBatch {
  FieldPtr field;
  Pose k_to_world;
  Pose k_to_ref;
  Intrinsics intr;
  const LabelImage* labels = nullptr;
  std::vector<PatchOrigin> patches;
  int frame_index = 0;
};

struct BatchOptions {
  std::uint64_t seed = 0;             ///< jitter seed; each patch derives its own stream
  int threads = 1;
  double coverage_min_weight = 1e-3;  ///< sample weight needed to count a cell as supervised
};

struct BatchResult {
  std::optional<double> loss;                       ///< frame losses averaged over supervised frames
  std::vector<std::optional<double>> frame_losses;  ///< per FrameBatch
  std::uint64_t rays_labeled = 0;                   ///< rays with a non-ignored target
  std::uint64_t rays_kept = 0;                      ///< of those, rays passing the OOB filter
};

/// Renders every patch of every frame against `probs`, evaluates the loss and,
/// when `grad` is given, accumulates its gradient. `coverage` (cell_count
/// entries) is incremented once per weight-bearing in-bounds sample of a kept
/// labeled ray. Results are bit-identical for any thread count.
BatchResult evaluate_batch(const ProbGrid& probs, std::span<const FrameBatch> frames, const RenderConfig& rcfg,
                           const LossConfig& lcfg, const BatchOptions& opts, GradBuffer* grad = nullptr,
                           std::vector<std::uint32_t>* coverage = nullptr);

/// A frozen supervision problem for gradient verification.
struct GradCheckProblem {
  BevSpec spec;
  int class_count = 0;
  std::vector<double> logits;
  std::vector<FrameBatch> frames;
  std::vector<LabelImage> labels;  ///< owned storage FrameBatch::labels may point into
  RenderConfig render;
  LossConfig loss;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  int probes = 0;
  double h = 0.0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  int worst_row = -1, worst_col = -1, worst_class = -1;
};

/// Sequence loss of `problem` at the given logits.
std::optional<double> problem_loss(const GradCheckProblem& problem, std::span<const double> logits);
/// Analytic gradient of problem_loss.
GradBuffer problem_gradient(const GradCheckProblem& problem, std::span<const double> logits);

/// Compares the analytic gradient against central differences on `n_probes`
/// randomly chosen logits of cells touched by kept rays.
GradCheckReport finite_diff_check(const GradCheckProblem& problem, int n_probes, double h, Rng& rng);

}  // namespace rendbev
