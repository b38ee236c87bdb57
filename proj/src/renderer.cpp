// SPDX-License-Identifier: Apache-2.0
#include "rendbev/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "rendbev/error.hpp"

namespace rendbev {

void RenderConfig::validate() const {
  if (m < 2) throw ConfigError("render config: m must be at least 2");
  if (!(z_near > 0.0 && z_near < z_far) || !std::isfinite(z_far)) {
    throw ConfigError("render config: require 0 < z_near < z_far");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("render config: tau must lie in [0, 1]");
  if (patch_size < 1) throw ConfigError("render config: patch_size must be at least 1");
}

void sample_ray_depths(const RenderConfig& cfg, Rng& rng, std::vector<double>& out) {
  const double d_near = 1.0 / cfg.z_near;
  const double d_far = 1.0 / cfg.z_far;
  out.resize(cfg.m);
  // Bin j (0-based) spans disparities [d_far + j/m (d_near - d_far), d_far + (j+1)/m (...)];
  // bin 0 is the farthest, so writing back-to-front yields ascending depth.
  for (int j = 0; j < cfg.m; ++j) {
    const double offset = cfg.jitter ? rng.uniform() : 0.5;
    const double disparity = d_far + (j + offset) / cfg.m * (d_near - d_far);
    out[cfg.m - 1 - j] = std::clamp(1.0 / disparity, cfg.z_near, cfg.z_far);
  }
}

std::vector<double> sample_ray_depths(const RenderConfig& cfg, Rng& rng) {
  std::vector<double> out;
  sample_ray_depths(cfg, rng, out);
  return out;
}

std::vector<double> depth_deltas(std::span<const double> depths, double z_far) {
  std::vector<double> out(depths.size());
  for (std::size_t i = 0; i + 1 < depths.size(); ++i) out[i] = depths[i + 1] - depths[i];
  if (!depths.empty()) out.back() = z_far - depths.back();
  return out;
}

namespace {

constexpr double kMaxAlpha = 1.0 - 0x1.0p-53;

// Shared by integrate_ray and render_ray so both follow one arithmetic path.
double integrate_into(std::span<const double> sigmas, std::span<const double> deltas, std::vector<double>& alphas,
                      std::vector<double>& transmittances, std::vector<double>& weights) {
  const std::size_t m = sigmas.size();
  alphas.resize(m);
  transmittances.resize(m);
  weights.resize(m);
  double t = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    // Opaque intervals round to exactly 1 in double; keep alpha below 1.
    const double a = std::min(-std::expm1(-sigmas[i] * deltas[i]), kMaxAlpha);
    alphas[i] = a;
    transmittances[i] = t;
    weights[i] = t * a;
    t *= 1.0 - a;
  }
  return t;
}

}  // namespace

Integration integrate_ray(std::span<const double> sigmas, std::span<const double> deltas) {
  if (sigmas.size() != deltas.size()) throw ConfigError("integrate_ray: sigmas and deltas differ in length");
  Integration out;
  out.residual_transmittance = integrate_into(sigmas, deltas, out.alphas, out.transmittances, out.weights);
  return out;
}

std::vector<double> render_class_probs(std::span<const double> weights, std::span<const double> probs,
                                       int class_count) {
  if (probs.size() != weights.size() * static_cast<std::size_t>(class_count)) {
    throw ConfigError("render_class_probs: probability buffer does not match weights");
  }
  std::vector<double> out(class_count, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const double* p = probs.data() + i * class_count;
    for (int c = 0; c < class_count; ++c) out[c] += weights[i] * p[c];
  }
  return out;
}

double render_scalar(std::span<const double> weights, std::span<const double> values) {
  if (weights.size() != values.size()) throw ConfigError("render_scalar: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * values[i];
  return s;
}

void render_ray(const RayContext& ctx, const RenderConfig& cfg, double u, double v, Rng& rng,
                RayIntegration& out) {
  const Ray ray = pixel_ray(ctx.intr, u, v);
  const int n_classes = ctx.probs->class_count;
  out.u = u;
  out.v = v;
  sample_ray_depths(cfg, rng, out.depths);
  const int m = cfg.m;
  // Depths are camera z; the metric step along the ray is dz / cos(angle to the axis).
  const double inv_cos = 1.0 / ray.direction.z();
  out.deltas.resize(m);
  out.sigmas.resize(m);
  out.cells.resize(m);
  out.probs.resize(static_cast<std::size_t>(m) * n_classes);
  for (int i = 0; i < m; ++i) {
    const double z = out.depths[i];
    out.deltas[i] = ((i + 1 < m ? out.depths[i + 1] : cfg.z_far) - z) * inv_cos;
    const Vec3 x_k = ray.direction * (z * inv_cos);
    out.sigmas[i] = ctx.field->density(ctx.k_to_world.apply(x_k));
    const Vec3 x_r = ctx.k_to_ref.apply(x_k);
    NearestSample s = sample_nearest(*ctx.probs, ortho_project(x_r));
    if (x_r.z() < 0.0 && s.cell.in_bounds) {
      s = NearestSample{ctx.probs->uniform, CellRef{s.cell.row, s.cell.col, false}};
    }
    out.cells[i] = s.cell;
    std::copy(s.probs.begin(), s.probs.end(), out.probs.begin() + static_cast<std::ptrdiff_t>(i) * n_classes);
  }
  out.residual_transmittance = integrate_into(out.sigmas, out.deltas, out.alphas, out.transmittances, out.weights);

  out.rendered.assign(n_classes, 0.0);
  out.oob = 0.0;
  for (int i = 0; i < m; ++i) {
    const double w = out.weights[i];
    if (w == 0.0) continue;
    if (!out.cells[i].in_bounds) {
      out.oob += w;
      continue;
    }
    const double* p = out.probs.data() + static_cast<std::size_t>(i) * n_classes;
    for (int c = 0; c < n_classes; ++c) out.rendered[c] += w * p[c];
  }
  out.kept = out.oob <= cfg.tau;
}

PatchOrigin clamp_patch_origin(const Intrinsics& intr, int size, PatchOrigin origin) {
  const int max_col = std::max(0, intr.width() - size);
  const int max_row = std::max(0, intr.height() - size);
  return {std::clamp(origin.col, 0, max_col), std::clamp(origin.row, 0, max_row)};
}

std::vector<RayIntegration> render_patch(const RayContext& ctx, PatchOrigin origin, const RenderConfig& cfg,
                                         Rng& rng) {
  cfg.validate();
  const int size = cfg.patch_size;
  if (size > ctx.intr.width() || size > ctx.intr.height()) {
    throw ConfigError("render_patch: patch larger than the image");
  }
  origin = clamp_patch_origin(ctx.intr, size, origin);
  std::vector<RayIntegration> out(static_cast<std::size_t>(size) * size);
  for (int dr = 0; dr < size; ++dr) {
    for (int dc = 0; dc < size; ++dc) {
      render_ray(ctx, cfg, origin.col + dc + 0.5, origin.row + dr + 0.5, rng,
                 out[static_cast<std::size_t>(dr) * size + dc]);
    }
  }
  return out;
}

}  // namespace rendbev
