// SPDX-License-Identifier: Apache-2.0
#include "rendbev/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "rendbev/density_field.hpp"
#include "rendbev/error.hpp"
#include "rendbev/io.hpp"

namespace rendbev {

namespace fs = std::filesystem;
using nlohmann::json;

FieldPolicy parse_field_policy(const std::string& name) {
  if (name == "per_frame") return FieldPolicy::kPerFrame;
  if (name == "reference_shadow") return FieldPolicy::kReferenceShadow;
  throw ConfigError("unknown field policy '" + name + "' (expected per_frame or reference_shadow)");
}

std::string to_string(FieldPolicy p) { return p == FieldPolicy::kPerFrame ? "per_frame" : "reference_shadow"; }

namespace {

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("RENDBEV_SEED");
  if (!s || !*s) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("RENDBEV_SEED is not an unsigned integer: '") + s + "'");
  return v;
}

// Reads `key` into `out` if present; records it as consumed.
template <typename T>
void take(const json& obj, const char* key, T& out, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, const std::vector<std::string>& seen, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(seen.begin(), seen.end(), it.key()) == seen.end()) {
      throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + it.key() + "'");
    }
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  auto it = j.find(key);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return *it;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.train.seed = 1;
  c.scene_seed = env_seed(c.scene_seed);
  c.train.seed = env_seed(c.train.seed);
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::string> top{"scene", "sequence", "camera", "bev", "render", "train", "policy"};

  {
    const json& s = section(j, "scene");
    std::vector<std::string> seen;
    std::string diff = to_string(c.difficulty);
    take(s, "seed", c.scene_seed, seen);
    take(s, "difficulty", diff, seen);
    take(s, "sigma_solid", c.sigma_solid, seen);
    reject_unknown(s, seen, "scene");
    c.difficulty = parse_difficulty(diff);
  }
  {
    const json& s = section(j, "sequence");
    std::vector<std::string> seen;
    take(s, "frames", c.frames, seen);
    take(s, "step", c.step, seen);
    take(s, "yaw_rate", c.yaw_rate, seen);
    take(s, "reference", c.reference, seen);
    reject_unknown(s, seen, "sequence");
  }
  if (j.contains("camera")) c.camera = io::intrinsics_from_json(j["camera"]);
  if (j.contains("bev")) c.bev = io::bev_spec_from_json(j["bev"]);
  {
    const json& s = section(j, "render");
    std::vector<std::string> seen;
    take(s, "m", c.render.m, seen);
    take(s, "z_near", c.render.z_near, seen);
    take(s, "z_far", c.render.z_far, seen);
    take(s, "jitter", c.render.jitter, seen);
    take(s, "tau", c.render.tau, seen);
    reject_unknown(s, seen, "render");
  }
  {
    const json& s = section(j, "train");
    std::vector<std::string> seen;
    take(s, "lr", c.train.lr, seen);
    take(s, "momentum", c.train.momentum, seen);
    take(s, "weight_decay", c.train.weight_decay, seen);
    take(s, "nesterov", c.train.nesterov, seen);
    take(s, "iterations", c.train.iterations, seen);
    take(s, "patches_total", c.train.patches_total, seen);
    take(s, "patch_size", c.train.patch_size, seen);
    take(s, "seed", c.train.seed, seen);
    take(s, "threads", c.train.threads, seen);
    reject_unknown(s, seen, "train");
  }
  {
    const json& s = section(j, "policy");
    std::vector<std::string> seen;
    std::vector<std::array<int, 2>> ranges;
    for (const auto& r : c.policy.future_ranges) ranges.push_back({r.first, r.second});
    take(s, "adjacent", c.policy.adjacent, seen);
    take(s, "future_ranges", ranges, seen);
    take(s, "enabled_future", c.policy.enabled_future, seen);
    reject_unknown(s, seen, "policy");
    c.policy.future_ranges.clear();
    for (const auto& r : ranges) c.policy.future_ranges.emplace_back(r[0], r[1]);
  }

  std::string field = to_string(c.field);
  std::string weighting = c.weighting == ClassWeighting::kUniform ? "uniform" : "inverse_frequency";
  std::string out = c.output_dir.string();
  take(j, "field", field, top);
  take(j, "corruption", c.corruption, top);
  take(j, "class_weights", weighting, top);
  take(j, "output_dir", out, top);
  reject_unknown(j, top, "");
  c.field = parse_field_policy(field);
  if (weighting == "uniform") {
    c.weighting = ClassWeighting::kUniform;
  } else if (weighting == "inverse_frequency") {
    c.weighting = ClassWeighting::kInverseFrequency;
  } else {
    throw ConfigError("class_weights must be 'uniform' or 'inverse_frequency'");
  }
  c.output_dir = out;
  return c;
}

json ExperimentConfig::to_json() const {
  json ranges = json::array();
  for (const auto& r : policy.future_ranges) ranges.push_back({r.first, r.second});
  return {
      {"scene", {{"seed", scene_seed}, {"difficulty", to_string(difficulty)}, {"sigma_solid", sigma_solid}}},
      {"sequence", {{"frames", frames}, {"step", step}, {"yaw_rate", yaw_rate}, {"reference", reference}}},
      {"camera", io::intrinsics_to_json(camera)},
      {"bev", io::bev_spec_to_json(bev)},
      {"render",
       {{"m", render.m}, {"z_near", render.z_near}, {"z_far", render.z_far}, {"jitter", render.jitter},
        {"tau", render.tau}}},
      {"train",
       {{"lr", train.lr},
        {"momentum", train.momentum},
        {"weight_decay", train.weight_decay},
        {"nesterov", train.nesterov},
        {"iterations", train.iterations},
        {"patches_total", train.patches_total},
        {"patch_size", train.patch_size},
        {"seed", train.seed},
        {"threads", train.threads}}},
      {"policy", {{"adjacent", policy.adjacent}, {"future_ranges", ranges}, {"enabled_future", policy.enabled_future}}},
      {"field", to_string(field)},
      {"corruption", corruption},
      {"class_weights", weighting == ClassWeighting::kUniform ? "uniform" : "inverse_frequency"},
      {"output_dir", output_dir.string()}};
}

void ExperimentConfig::validate() const {
  if (frames < 2) throw ConfigError("sequence.frames must be at least 2");
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("sequence.step must be positive");
  if (!std::isfinite(yaw_rate)) throw ConfigError("sequence.yaw_rate must be finite");
  if (reference < 0 || reference >= frames) throw ConfigError("sequence.reference must index a frame");
  if (!(corruption >= 0.0 && corruption <= 1.0)) throw ConfigError("corruption must lie in [0, 1]");
  if (!(sigma_solid > 0.0)) throw ConfigError("scene.sigma_solid must be positive");
  render.validate();
  train.validate();
  policy.validate();
  if (train.patch_size > camera.width() || train.patch_size > camera.height()) {
    throw ConfigError("train.patch_size exceeds the image size");
  }
}

double Dataset::reference_height() const { return scene.ground_y - poses[reference].translation().y(); }

Dataset generate_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.scene = generate_scene(cfg.scene_seed, cfg.difficulty);
  d.poses = straight_trajectory(cfg.frames, cfg.step, cfg.yaw_rate);
  d.camera = cfg.camera;
  d.bev = cfg.bev;
  d.reference = cfg.reference;
  for (const Pose& p : d.poses) {
    d.seg.push_back(gt_perspective_seg(d.scene, p, d.camera, cfg.render.z_far));
    d.depth.push_back(render_depth_image(d.scene, p, d.camera, cfg.render.z_near, cfg.render.z_far));
  }
  d.gt_bev_full = gt_bev(d.scene, d.bev, d.poses[d.reference]);
  const MaskGrid visible = fov_mask(d.bev, d.camera, d.reference_height(), cfg.render.z_near);
  d.gt_bev = d.gt_bev_full;
  for (std::size_t i = 0; i < visible.data.size(); ++i) {
    if (!visible.data[i]) d.gt_bev.data[i] = static_cast<std::uint8_t>(d.scene.void_class);
  }
  return d;
}

namespace {

std::string frame_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d.%s", prefix, i, ext);
  return buf;
}

io::Palette palette_of(const Scene& s) {
  io::Palette p;
  for (const auto& c : s.classes) p.push_back(c.rgb);
  return p;
}

}  // namespace

void save_dataset(const Dataset& data, const fs::path& dir) {
  json j;
  j["scene"] = io::scene_to_json(data.scene);
  j["camera"] = io::intrinsics_to_json(data.camera);
  j["bev"] = io::bev_spec_to_json(data.bev);
  j["frames"] = data.frame_count();
  j["reference"] = data.reference;
  io::write_json(dir / "scene.json", j);
  io::write_poses(dir / "poses.txt", data.poses);
  const io::Palette pal = palette_of(data.scene);
  for (int i = 0; i < data.frame_count(); ++i) {
    io::write_label_pgm(dir / frame_name("seg", i, "pgm"), data.seg[i]);
    io::write_label_ppm(dir / frame_name("seg", i, "ppm"), data.seg[i], pal);
    io::write_depth_pgm(dir / frame_name("depth", i, "pgm"), data.depth[i]);
  }
  io::write_label_pgm(dir / "gt_bev.pgm", io::flip_rows(data.gt_bev));
  io::write_label_ppm(dir / "gt_bev.ppm", io::flip_rows(data.gt_bev), pal);
  io::write_label_pgm(dir / "gt_bev_full.pgm", io::flip_rows(data.gt_bev_full));
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "scene.json")) {
    throw DataError("no generated dataset in '" + dir.string() + "' (scene.json missing; run gen first)");
  }
  const json j = io::read_json(dir / "scene.json");
  Dataset d;
  try {
    d.scene = io::scene_from_json(j.at("scene"));
    d.camera = io::intrinsics_from_json(j.at("camera"));
    d.bev = io::bev_spec_from_json(j.at("bev"));
    d.reference = j.at("reference").get<int>();
    const int n = j.at("frames").get<int>();
    d.poses = io::read_poses(dir / "poses.txt");
    if (static_cast<int>(d.poses.size()) != n) {
      throw DataError("'" + (dir / "poses.txt").string() + "' holds " + std::to_string(d.poses.size()) +
                      " poses, scene.json declares " + std::to_string(n));
    }
  } catch (const json::exception& e) {
    throw DataError("'" + (dir / "scene.json").string() + "': " + e.what());
  }
  if (d.reference < 0 || d.reference >= d.frame_count()) throw DataError("scene.json: reference out of range");
  constexpr double kFar = 80.0;
  for (int i = 0; i < d.frame_count(); ++i) {
    d.seg.push_back(io::read_label_pgm(dir / frame_name("seg", i, "pgm")));
    d.depth.push_back(io::read_depth_pgm(dir / frame_name("depth", i, "pgm"), kFar));
    if (d.seg.back().rows != d.camera.height() || d.seg.back().cols != d.camera.width()) {
      throw DataError("'" + (dir / frame_name("seg", i, "pgm")).string() + "' does not match the camera size");
    }
  }
  d.gt_bev = io::flip_rows(io::read_label_pgm(dir / "gt_bev.pgm"));
  d.gt_bev_full = io::flip_rows(io::read_label_pgm(dir / "gt_bev_full.pgm"));
  if (d.gt_bev.rows != d.bev.rows() || d.gt_bev.cols != d.bev.cols()) {
    throw DataError("gt_bev.pgm does not match the BEV layout");
  }
  return d;
}

LossConfig class_weights(const LabelImage& gt, int class_count, ClassWeighting mode) {
  LossConfig lc = LossConfig::uniform(class_count);
  if (mode == ClassWeighting::kUniform) return lc;
  std::vector<std::uint64_t> count(class_count, 0);
  for (auto v : gt.data) {
    if (v < class_count) ++count[v];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < class_count; ++c) {
    if (count[c]) {
      sum += 1.0 / static_cast<double>(count[c]);
      ++present;
    }
  }
  if (present == 0) return lc;
  const double mean = sum / present;
  for (int c = 0; c < class_count; ++c) {
    if (count[c]) lc.class_weights[c] = (1.0 / static_cast<double>(count[c])) / mean;
  }
  return lc;
}

TrainData build_train_data(const Dataset& data, const ExperimentConfig& cfg) {
  TrainData td;
  td.poses = data.poses;
  td.intr = data.camera;
  if (cfg.corruption > 0.0) {
    Rng rng(cfg.train.seed ^ 0xA5A5'5A5A'C3C3'3C3CULL);
    for (const auto& s : data.seg) {
      td.labels.push_back(corrupt_labels(s, cfg.corruption, data.scene.class_count(), data.scene.void_class, rng));
    }
  } else {
    td.labels = data.seg;
  }
  if (cfg.field == FieldPolicy::kPerFrame) {
    const FieldPtr world = scene_field(data.scene, cfg.sigma_solid);
    for (const Pose& p : data.poses) {
      td.fields.push_back(restrict_to_frustum(world, Frustum(p, data.camera, cfg.render.z_near, cfg.render.z_far)));
    }
  } else {
    const Frustum ref(data.poses[data.reference], data.camera, cfg.render.z_near, cfg.render.z_far);
    const FieldPtr shadow = depth_shadow_field(data.depth[data.reference], ref, cfg.sigma_solid);
    td.fields.assign(data.poses.size(), shadow);
  }
  return td;
}

IouScores evaluate_prediction(const LabelImage& pred, const LabelImage& gt, int class_count) {
  const MaskGrid all(gt.rows, gt.cols, 1);
  if (!pred.same_shape(gt)) {
    throw DomainError("prediction is " + std::to_string(pred.rows) + "x" + std::to_string(pred.cols) +
                      ", ground truth is " + std::to_string(gt.rows) + "x" + std::to_string(gt.cols));
  }
  const IouScores s = iou_scores(confusion(pred, gt, evaluation_mask(gt, all, class_count), class_count));
  if (s.evaluated_cells == 0) throw DataError("no evaluated cells");
  return s;
}

json metrics_json(const IouScores& s, const std::vector<ClassInfo>& classes) {
  json per = json::object();
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    const std::string name = c < classes.size() ? classes[c].name : "class_" + std::to_string(c);
    per[name] = s.included[c] ? json(s.per_class[c]) : json(nullptr);
  }
  return {{"per_class", per}, {"miou", s.miou}, {"evaluated_cells", s.evaluated_cells}};
}

RunOutcome run_training(const Dataset& data, const ExperimentConfig& cfg) {
  cfg.validate();
  const int C = data.scene.class_count();
  const TrainData td = build_train_data(data, cfg);
  const LossConfig lc = class_weights(data.gt_bev, C, cfg.weighting);
  RenderConfig rc = cfg.render;
  rc.patch_size = cfg.train.patch_size;
  RunOutcome out;
  out.train = train_bev(td, data.reference, data.bev, C, rc, lc, cfg.train, cfg.policy);
  out.prediction = argmax_map(out.train.grid);
  out.scores = evaluate_prediction(out.prediction, data.gt_bev, C);
  const MaskGrid sup = out.train.supervised_mask();
  const MaskGrid em = evaluation_mask(data.gt_bev_full, sup, C);
  out.supervised_scores = iou_scores(confusion(out.prediction, data.gt_bev_full, em, C));
  std::uint64_t correct = 0, total = 0;
  for (std::size_t i = 0; i < em.data.size(); ++i) {
    out.supervised_cells += sup.data[i];
    if (!em.data[i]) continue;
    ++total;
    correct += out.prediction.data[i] == data.gt_bev_full.data[i];
  }
  out.supervised_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return out;
}

LabelImage ipm_baseline(const Dataset& data) {
  return ipm_warp(data.seg[data.reference], data.camera, data.reference_height(), 0.0, data.bev,
                  data.scene.void_class);
}

GradCheckProblem build_gradcheck_problem(const Dataset& data, const ExperimentConfig& cfg, int patches) {
  cfg.validate();
  GradCheckProblem p;
  p.spec = data.bev;
  p.class_count = data.scene.class_count();
  p.render = cfg.render;
  p.render.patch_size = cfg.train.patch_size;
  p.loss = class_weights(data.gt_bev, p.class_count, cfg.weighting);
  p.seed = cfg.train.seed;
  Rng rng(cfg.train.seed);
  p.logits.resize(p.spec.cell_count() * p.class_count);
  for (double& v : p.logits) v = rng.uniform(-1.0, 1.0);

  const auto draws = sample_supervision(data.frame_count(), data.reference, cfg.policy, patches, data.camera,
                                        cfg.train.patch_size, rng);
  const FieldPtr world = scene_field(data.scene, cfg.sigma_solid);
  const Pose& ref = data.poses[data.reference];
  p.labels.reserve(draws.size());
  for (const auto& d : draws) {
    if (p.frames.empty() || p.frames.back().frame_index != d.frame) {
      FrameBatch fb;
      fb.frame_index = d.frame;
      fb.k_to_world = data.poses[d.frame];
      fb.k_to_ref = compose_relative_pose(data.poses[d.frame], ref);
      fb.intr = data.camera;
      fb.field = restrict_to_frustum(world, Frustum(fb.k_to_world, data.camera, cfg.render.z_near, cfg.render.z_far));
      p.labels.push_back(data.seg[d.frame]);
      p.frames.push_back(std::move(fb));
    }
    p.frames.back().patches.push_back(d.origin);
  }
  for (std::size_t i = 0; i < p.frames.size(); ++i) p.frames[i].labels = &p.labels[i];
  return p;
}

json gradcheck_json(const GradCheckReport& r) {
  return {{"probes", r.probes},
          {"h", r.h},
          {"max_rel_err", r.max_rel_err},
          {"mean_rel_err", r.mean_rel_err},
          {"worst_cell", {{"row", r.worst_row}, {"col", r.worst_col}, {"class", r.worst_class}}}};
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "patches") return SweepAxis::kPatches;
  if (name == "tau") return SweepAxis::kTau;
  if (name == "m") return SweepAxis::kM;
  throw ConfigError("unknown sweep axis '" + name + "' (expected patches, tau or m)");
}

std::vector<SweepRow> run_sweep(const Dataset& data, const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values, const std::vector<std::uint64_t>& seeds) {
  if (values.empty() || seeds.empty()) throw ConfigError("sweep needs at least one value and one seed");
  std::vector<SweepRow> rows;
  for (double v : values) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = cfg;
      c.train.seed = seed;
      switch (axis) {
        case SweepAxis::kPatches:
          if (v < 1 || v != std::floor(v)) throw ConfigError("patches sweep values must be positive integers");
          c.train.patches_total = static_cast<int>(v);
          break;
        case SweepAxis::kTau:
          c.render.tau = v;
          break;
        case SweepAxis::kM:
          if (v < 1 || v != std::floor(v)) throw ConfigError("m sweep values must be positive integers");
          c.render.m = static_cast<int>(v);
          break;
      }
      const RunOutcome o = run_training(data, c);
      rows.push_back({v, seed, o.scores.miou, o.train.seconds_per_iteration});
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "value,seed,miou,sec_per_iter\n" << std::setprecision(10);
  for (const auto& r : rows) os << r.value << ',' << r.seed << ',' << r.miou << ',' << r.sec_per_iter << '\n';
  return os.str();
}

std::vector<AblationRow> run_ablation(const Dataset& data, const ExperimentConfig& cfg) {
  struct Variant {
    const char* name;
    bool future;
    FieldPolicy field;
  };
  const Variant variants[] = {{"adjacent_only", false, FieldPolicy::kPerFrame},
                              {"reference_shadow", true, FieldPolicy::kReferenceShadow},
                              {"full", true, FieldPolicy::kPerFrame}};
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ExperimentConfig c = cfg;
    c.policy.enabled_future = v.future;
    c.field = v.field;
    const RunOutcome o = run_training(data, c);
    rows.push_back({v.name, v.future, v.field, o.scores.miou, o.supervised_cells, o.train.seconds_per_iteration});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "config" << std::setw(8) << "future" << std::setw(18) << "field"
     << std::setw(10) << "mIoU" << std::setw(12) << "supervised" << "sec/iter\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(18) << r.name << std::setw(8) << (r.future ? "yes" : "no") << std::setw(18)
       << to_string(r.field) << std::setw(10) << std::fixed << std::setprecision(4) << r.miou << std::setw(12)
       << r.supervised_cells << std::setprecision(4) << r.sec_per_iter << '\n';
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

}  // namespace rendbev
