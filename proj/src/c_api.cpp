// SPDX-License-Identifier: Apache-2.0
#include "rendbev/rendbev.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "rendbev/error.hpp"
#include "rendbev/experiment.hpp"
#include "rendbev/io.hpp"

struct rb_config {
  rendbev::ExperimentConfig cfg;
};

struct rb_grid {
  rendbev::BevGrid grid;
};

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using rendbev::ErrorKind;

thread_local std::string g_last_error;

rb_status fail(rb_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
rb_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return RB_OK;
  } catch (const rendbev::Error& e) {
    switch (e.kind()) {
      case ErrorKind::kConfig:
        return fail(RB_ERR_CONFIG, e.what());
      case ErrorKind::kData:
        return fail(RB_ERR_DATA, e.what());
      case ErrorKind::kNumeric:
        return fail(RB_ERR_NUMERIC, e.what());
    }
    return fail(RB_ERR_INTERNAL, e.what());
  } catch (const json::exception& e) {
    return fail(RB_ERR_CONFIG, std::string("JSON: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(RB_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RB_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void require(const void* p, const char* what) {
  if (!p) throw rendbev::ConfigError(std::string(what) + " must not be NULL");
}

rendbev::LabelImage load_labels_any(const fs::path& path) {
  const std::string head = rendbev::io::read_binary(path).substr(0, 4);
  if (head == "BEVG") return rendbev::argmax_map(rendbev::io::load_grid(path));
  return rendbev::io::flip_rows(rendbev::io::read_label_pgm(path));
}

rendbev::io::Palette palette_of(const rendbev::Scene& s) {
  rendbev::io::Palette p;
  for (const auto& c : s.classes) p.push_back(c.rgb);
  return p;
}

}  // namespace

extern "C" {

const char* rb_last_error(void) { return g_last_error.c_str(); }

const char* rb_version(void) { return "1.0.0"; }

void rb_string_free(char* s) { std::free(s); }

rb_status rb_config_create(rb_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto* c = new rb_config{rendbev::ExperimentConfig::defaults()};
    *out = c;
  });
}

void rb_config_destroy(rb_config* cfg) { delete cfg; }

rb_status rb_config_merge_json(rb_config* cfg, const char* json_text) {
  return guarded([&] {
    require(cfg, "cfg");
    require(json_text, "json_text");
    json j;
    try {
      j = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw rendbev::ConfigError(std::string("config JSON: ") + e.what());
    }
    cfg->cfg = rendbev::ExperimentConfig::from_json(j, cfg->cfg);
  });
}

rb_status rb_config_load_file(rb_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(path, "path");
    json j;
    try {
      j = rendbev::io::read_json(path);
    } catch (const rendbev::DataError& e) {
      throw rendbev::ConfigError(e.what());
    }
    cfg->cfg = rendbev::ExperimentConfig::from_json(j, cfg->cfg);
  });
}

rb_status rb_config_to_json(const rb_config* cfg, char** out_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_json, "out_json");
    *out_json = dup_string(cfg->cfg.to_json().dump(2));
  });
}

rb_status rb_gen(const rb_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const rendbev::Dataset d = rendbev::generate_dataset(cfg->cfg);
    rendbev::save_dataset(d, out_dir);
  });
}

rb_status rb_train(const rb_config* cfg, const char* data_dir, const char* out_dir, char** out_metrics_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const rendbev::Dataset d = rendbev::load_dataset(data_dir);
    const rendbev::RunOutcome o = rendbev::run_training(d, cfg->cfg);
    const fs::path out(out_dir);
    rendbev::io::save_grid(out / "bev.bin", o.train.grid);
    const rendbev::LabelImage shown = rendbev::io::flip_rows(o.prediction);
    rendbev::io::write_label_pgm(out / "bev_argmax.pgm", shown);
    rendbev::io::write_label_ppm(out / "bev_argmax.ppm", shown, palette_of(d.scene));
    rendbev::io::write_loss_csv(out / "loss.csv", o.train.history);
    json m = rendbev::metrics_json(o.scores, d.scene.classes);
    m["supervised"] = {{"cells", o.supervised_cells},
                       {"accuracy", o.supervised_accuracy},
                       {"metrics", rendbev::metrics_json(o.supervised_scores, d.scene.classes)}};
    m["seconds_per_iteration"] = o.train.seconds_per_iteration;
    rendbev::io::write_json(out / "metrics.json", m);
    if (out_metrics_json) *out_metrics_json = dup_string(m.dump(2));
  });
}

rb_status rb_trace_ray(const rb_config* cfg, const char* data_dir, const rb_grid* grid, int frame, double u, double v,
                       char** out_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(grid, "grid");
    require(out_json, "out_json");
    const rendbev::Dataset d = rendbev::load_dataset(data_dir);
    if (frame < 0 || frame >= d.frame_count()) throw rendbev::ConfigError("trace frame out of range");
    if (!(grid->grid.spec == d.bev) || grid->grid.class_count != d.scene.class_count()) {
      throw rendbev::DataError("grid does not match the dataset's BEV layout");
    }
    const rendbev::TrainData td = rendbev::build_train_data(d, cfg->cfg);
    const rendbev::ProbGrid probs = rendbev::softmax_probs(grid->grid);
    rendbev::RayContext ctx{&probs, td.fields[frame].get(), d.poses[frame],
                            rendbev::compose_relative_pose(d.poses[frame], d.poses[d.reference]), d.camera};
    rendbev::RenderConfig rc = cfg->cfg.render;
    rc.jitter = false;
    rendbev::Rng rng(cfg->cfg.train.seed);
    rendbev::RayIntegration ray;
    rendbev::render_ray(ctx, rc, u, v, rng, ray);
    json j = rendbev::io::ray_trace_json(ray);
    j["frame"] = frame;
    *out_json = dup_string(j.dump(2));
  });
}

rb_status rb_eval(const char* pred_path, const char* gt_path, const char* out_path, char** out_metrics_json) {
  return guarded([&] {
    require(pred_path, "pred_path");
    require(gt_path, "gt_path");
    const rendbev::LabelImage pred = load_labels_any(pred_path);
    const rendbev::LabelImage gt = rendbev::io::flip_rows(rendbev::io::read_label_pgm(gt_path));
    // Class count: one past the largest non-void label seen in either grid.
    int classes = 2;
    for (auto v : gt.data) {
      if (v < 255) classes = std::max(classes, v + 1);
    }
    for (auto v : pred.data) {
      if (v < 255) classes = std::max(classes, v + 1);
    }
    std::vector<rendbev::ClassInfo> names;
    const fs::path scene = fs::path(gt_path).parent_path() / "scene.json";
    if (fs::exists(scene)) {
      const auto s = rendbev::io::scene_from_json(rendbev::io::read_json(scene).at("scene"));
      names = s.classes;
      classes = std::max(classes, s.class_count());
    }
    const rendbev::IouScores s = rendbev::evaluate_prediction(pred, gt, classes);
    const json m = rendbev::metrics_json(s, names);
    if (out_path) rendbev::io::write_json(out_path, m);
    if (out_metrics_json) *out_metrics_json = dup_string(m.dump(2));
  });
}

rb_status rb_ipm(const char* data_dir, const char* out_dir) {
  return guarded([&] {
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const rendbev::Dataset d = rendbev::load_dataset(data_dir);
    const rendbev::LabelImage bev = rendbev::io::flip_rows(rendbev::ipm_baseline(d));
    rendbev::io::write_label_pgm(fs::path(out_dir) / "bev_ipm.pgm", bev);
    rendbev::io::write_label_ppm(fs::path(out_dir) / "bev_ipm.ppm", bev, palette_of(d.scene));
  });
}

rb_status rb_gradcheck(const rb_config* cfg, int probes, double h, int patches, const char* grid_path,
                       const char* out_path, char** out_report_json) {
  return guarded([&] {
    require(cfg, "cfg");
    if (patches < 1) throw rendbev::ConfigError("gradcheck needs at least one patch");
    rendbev::BevGrid loaded;
    if (grid_path) loaded = rendbev::io::load_grid(grid_path);
    const rendbev::Dataset d = rendbev::generate_dataset(cfg->cfg);
    rendbev::GradCheckProblem p = rendbev::build_gradcheck_problem(d, cfg->cfg, patches);
    if (grid_path) {
      if (!(loaded.spec == p.spec) || loaded.class_count != p.class_count) {
        throw rendbev::DataError(std::string("'") + grid_path + "' does not match the configured BEV layout");
      }
      p.logits.assign(loaded.logits.begin(), loaded.logits.end());
    }
    rendbev::Rng rng(cfg->cfg.train.seed ^ 0x5EEDULL);
    const rendbev::GradCheckReport r = rendbev::finite_diff_check(p, probes, h, rng);
    const json j = rendbev::gradcheck_json(r);
    if (out_path) rendbev::io::write_json(out_path, j);
    if (out_report_json) *out_report_json = dup_string(j.dump(2));
  });
}

rb_status rb_sweep(const rb_config* cfg, const char* data_dir, const char* axis, const double* values,
                   size_t n_values, const uint64_t* seeds, size_t n_seeds, const char* out_csv) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(axis, "axis");
    require(out_csv, "out_csv");
    if (n_values) require(values, "values");
    if (n_seeds) require(seeds, "seeds");
    const rendbev::SweepAxis ax = rendbev::parse_sweep_axis(axis);
    const rendbev::Dataset d = rendbev::load_dataset(data_dir);
    const auto rows = rendbev::run_sweep(d, cfg->cfg, ax, std::vector<double>(values, values + n_values),
                                         std::vector<std::uint64_t>(seeds, seeds + n_seeds));
    rendbev::io::write_text(out_csv, rendbev::sweep_csv(rows));
  });
}

rb_status rb_ablate(const rb_config* cfg, const char* data_dir, const char* out_dir, char** out_table) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const rendbev::Dataset d = rendbev::load_dataset(data_dir);
    const auto rows = rendbev::run_ablation(d, cfg->cfg);
    std::string csv = "config,future,field,miou,supervised_cells,sec_per_iter\n";
    for (const auto& r : rows) {
      csv += r.name + "," + (r.future ? "1" : "0") + "," + rendbev::to_string(r.field) + "," +
             std::to_string(r.miou) + "," + std::to_string(r.supervised_cells) + "," + std::to_string(r.sec_per_iter) +
             "\n";
    }
    rendbev::io::write_text(fs::path(out_dir) / "ablation.csv", csv);
    if (out_table) *out_table = dup_string(rendbev::ablation_table(rows));
  });
}

rb_status rb_grid_load(const char* path, rb_grid** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new rb_grid{rendbev::io::load_grid(path)};
  });
}

void rb_grid_destroy(rb_grid* grid) { delete grid; }

rb_status rb_grid_shape(const rb_grid* grid, int* rows, int* cols, int* classes) {
  return guarded([&] {
    require(grid, "grid");
    if (rows) *rows = grid->grid.spec.rows();
    if (cols) *cols = grid->grid.spec.cols();
    if (classes) *classes = grid->grid.class_count;
  });
}

rb_status rb_grid_argmax(const rb_grid* grid, uint8_t* out, size_t out_len) {
  return guarded([&] {
    require(grid, "grid");
    require(out, "out");
    const rendbev::LabelImage a = rendbev::argmax_map(grid->grid);
    if (out_len < a.data.size()) throw rendbev::ConfigError("output buffer too small for the grid");
    std::memcpy(out, a.data.data(), a.data.size());
  });
}

}  // extern "C"
