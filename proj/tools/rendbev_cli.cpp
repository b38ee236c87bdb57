// SPDX-License-Identifier: Apache-2.0
//
// rendbev command line tool. Exit codes: 0 success, 2 configuration error,
// 3 data error, 4 numeric failure.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rendbev/rendbev.h"

namespace {

using nlohmann::json;

struct ConfigDeleter {
  void operator()(rb_config* c) const { rb_config_destroy(c); }
};
struct GridDeleter {
  void operator()(rb_grid* g) const { rb_grid_destroy(g); }
};
using ConfigPtr = std::unique_ptr<rb_config, ConfigDeleter>;
using GridPtr = std::unique_ptr<rb_grid, GridDeleter>;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { rb_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Failure {
  rb_status status;
};

void check(rb_status s) {
  if (s != RB_OK) throw Failure{s};
}

// Flags shared by the commands that build an experiment configuration.
struct CommonFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> scene_seed;
  std::optional<int> threads;
  std::optional<std::string> difficulty;
  std::optional<int> frames;
  std::optional<double> step;
  std::optional<int> iterations;
  std::optional<int> patches;
  std::optional<double> lr;
  std::optional<double> tau;
  std::optional<int> samples;
  std::optional<std::string> field;
  std::optional<double> corruption;
  bool no_future = false;
};

void add_config_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON experiment configuration");
  cmd->add_option("--seed", f.seed, "training seed (default: RENDBEV_SEED or 1)");
  cmd->add_option("--scene-seed", f.scene_seed, "scene generation seed");
  cmd->add_option("--threads", f.threads, "worker threads for rendering and gradients")->check(CLI::PositiveNumber);
}

void add_scene_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--difficulty", f.difficulty, "flat, static or occlusion");
  cmd->add_option("--frames", f.frames, "sequence length");
  cmd->add_option("--step", f.step, "metres between frames");
}

void add_train_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--iterations", f.iterations, "optimization steps");
  cmd->add_option("--patches", f.patches, "patches per iteration");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--tau", f.tau, "out-of-BEV filter threshold");
  cmd->add_option("--samples", f.samples, "samples per ray");
  cmd->add_option("--field", f.field, "per_frame or reference_shadow");
  cmd->add_option("--corruption", f.corruption, "fraction of perspective labels replaced at random");
  cmd->add_flag("--no-future", f.no_future, "supervise with adjacent frames only");
}

ConfigPtr make_config(const CommonFlags& f) {
  rb_config* raw = nullptr;
  check(rb_config_create(&raw));
  ConfigPtr cfg(raw);
  if (!f.config_file.empty()) check(rb_config_load_file(cfg.get(), f.config_file.c_str()));
  json o = json::object();
  if (f.seed) o["train"]["seed"] = *f.seed;
  if (f.scene_seed) o["scene"]["seed"] = *f.scene_seed;
  if (f.threads) o["train"]["threads"] = *f.threads;
  if (f.difficulty) o["scene"]["difficulty"] = *f.difficulty;
  if (f.frames) o["sequence"]["frames"] = *f.frames;
  if (f.step) o["sequence"]["step"] = *f.step;
  if (f.iterations) o["train"]["iterations"] = *f.iterations;
  if (f.patches) o["train"]["patches_total"] = *f.patches;
  if (f.lr) o["train"]["lr"] = *f.lr;
  if (f.tau) o["render"]["tau"] = *f.tau;
  if (f.samples) o["render"]["m"] = *f.samples;
  if (f.field) o["field"] = *f.field;
  if (f.corruption) o["corruption"] = *f.corruption;
  if (f.no_future) o["policy"]["enabled_future"] = false;
  check(rb_config_merge_json(cfg.get(), o.dump().c_str()));
  return cfg;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) {
      std::fprintf(stderr, "error: bad %s entry '%s'\n", what, item.c_str());
      throw Failure{RB_ERR_CONFIG};
    }
    out.push_back(v);
  }
  return out;
}

void print_miou(const std::string& metrics_json) {
  const json m = json::parse(metrics_json);
  std::printf("mIoU %.4f over %llu cells\n", m.at("miou").get<double>(),
              static_cast<unsigned long long>(m.at("evaluated_cells").get<std::uint64_t>()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised BEV segmentation by rendering perspective labels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rb_version()));

  CommonFlags gen_f;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen", "generate a synthetic sequence with ground truth");
  add_config_flags(gen, gen_f);
  add_scene_flags(gen, gen_f);
  gen->add_option("--out", gen_out, "output directory");

  CommonFlags train_f;
  std::string train_data = "data", train_out = "run", trace;
  auto* train = app.add_subcommand("train", "optimize a BEV grid from rendered supervision");
  add_config_flags(train, train_f);
  add_train_flags(train, train_f);
  train->add_option("--data", train_data, "dataset directory written by gen");
  train->add_option("--out", train_out, "output directory");
  train->add_option("--trace", trace, "also dump the ray FRAME:U:V rendered against the trained grid");

  std::string eval_pred, eval_gt, eval_out;
  auto* eval = app.add_subcommand("eval", "score a predicted BEV against ground truth");
  eval->add_option("--pred", eval_pred, "bev.bin or label PGM")->required();
  eval->add_option("--gt", eval_gt, "ground-truth label PGM")->required();
  eval->add_option("--out", eval_out, "metrics JSON path");

  std::string ipm_data = "data", ipm_out = "ipm";
  auto* ipm = app.add_subcommand("ipm", "inverse perspective mapping baseline");
  ipm->add_option("--data", ipm_data, "dataset directory written by gen");
  ipm->add_option("--out", ipm_out, "output directory");

  CommonFlags gc_f;
  int gc_probes = 100, gc_patches = 8;
  double gc_h = 1e-3;
  std::string gc_grid, gc_out;
  auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_config_flags(gc, gc_f);
  add_scene_flags(gc, gc_f);
  gc->add_option("--probes", gc_probes, "number of probed logits")->check(CLI::PositiveNumber);
  gc->add_option("--fd-h", gc_h, "central difference step");
  gc->add_option("--patches", gc_patches, "patches in the frozen problem")->check(CLI::PositiveNumber);
  gc->add_option("--grid", gc_grid, "use the logits of this grid file");
  gc->add_option("--out", gc_out, "report JSON path");

  CommonFlags sw_f;
  std::string sw_data = "data", sw_axis = "patches", sw_values = "16,64,192", sw_seeds = "1,2,3",
              sw_out = "sweep.csv";
  auto* sw = app.add_subcommand("sweep", "train and evaluate across values of one parameter");
  add_config_flags(sw, sw_f);
  add_train_flags(sw, sw_f);
  sw->add_option("--data", sw_data, "dataset directory written by gen");
  sw->add_option("--axis", sw_axis, "patches, tau or m");
  sw->add_option("--values", sw_values, "comma-separated axis values");
  sw->add_option("--seeds", sw_seeds, "comma-separated training seeds");
  sw->add_option("--out", sw_out, "CSV path");

  CommonFlags ab_f;
  std::string ab_data = "data", ab_out = "ablate";
  auto* ab = app.add_subcommand("ablate", "compare future-frame and density-field policies");
  add_config_flags(ab, ab_f);
  add_train_flags(ab, ab_f);
  ab->add_option("--data", ab_data, "dataset directory written by gen");
  ab->add_option("--out", ab_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : RB_ERR_CONFIG;
  }

  try {
    if (*gen) {
      auto cfg = make_config(gen_f);
      check(rb_gen(cfg.get(), gen_out.c_str()));
      std::printf("wrote %s\n", gen_out.c_str());
    } else if (*train) {
      auto cfg = make_config(train_f);
      OwnedString metrics;
      check(rb_train(cfg.get(), train_data.c_str(), train_out.c_str(), &metrics.p));
      print_miou(metrics.str());
      if (!trace.empty()) {
        int frame = 0;
        double u = 0, v = 0;
        if (std::sscanf(trace.c_str(), "%d:%lf:%lf", &frame, &u, &v) != 3) {
          std::fprintf(stderr, "error: --trace expects FRAME:U:V\n");
          return RB_ERR_CONFIG;
        }
        rb_grid* raw = nullptr;
        check(rb_grid_load((std::filesystem::path(train_out) / "bev.bin").string().c_str(), &raw));
        GridPtr grid(raw);
        OwnedString t;
        check(rb_trace_ray(cfg.get(), train_data.c_str(), grid.get(), frame, u, v, &t.p));
        const std::string path = (std::filesystem::path(train_out) / "trace.json").string();
        std::FILE* fp = std::fopen(path.c_str(), "wb");
        if (!fp) {
          std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
          return RB_ERR_DATA;
        }
        std::fputs(t.str().c_str(), fp);
        std::fclose(fp);
      }
    } else if (*eval) {
      OwnedString metrics;
      check(rb_eval(eval_pred.c_str(), eval_gt.c_str(), eval_out.empty() ? nullptr : eval_out.c_str(), &metrics.p));
      print_miou(metrics.str());
    } else if (*ipm) {
      check(rb_ipm(ipm_data.c_str(), ipm_out.c_str()));
      std::printf("wrote %s\n", ipm_out.c_str());
    } else if (*gc) {
      auto cfg = make_config(gc_f);
      OwnedString report;
      check(rb_gradcheck(cfg.get(), gc_probes, gc_h, gc_patches, gc_grid.empty() ? nullptr : gc_grid.c_str(),
                         gc_out.empty() ? nullptr : gc_out.c_str(), &report.p));
      std::printf("%s\n", report.str().c_str());
    } else if (*sw) {
      auto cfg = make_config(sw_f);
      const auto values = parse_list<double>(sw_values, "value");
      const auto seeds = parse_list<std::uint64_t>(sw_seeds, "seed");
      check(rb_sweep(cfg.get(), sw_data.c_str(), sw_axis.c_str(), values.data(), values.size(), seeds.data(),
                     seeds.size(), sw_out.c_str()));
      std::printf("wrote %s\n", sw_out.c_str());
    } else if (*ab) {
      auto cfg = make_config(ab_f);
      OwnedString table;
      check(rb_ablate(cfg.get(), ab_data.c_str(), ab_out.c_str(), &table.p));
      std::fputs(table.str().c_str(), stdout);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", rb_last_error());
    return static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return RB_ERR_INTERNAL;
  }
  return 0;
}
