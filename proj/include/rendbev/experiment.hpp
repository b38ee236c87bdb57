// SPDX-License-Identifier: Apache-2.0
//
// End-to-end recipes shared by the command line tool, the C API and the
// acceptance suite: dataset generation, training runs, evaluation, sweeps.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rendbev/eval_baseline.hpp"
#include "rendbev/loss_grad.hpp"
#include "rendbev/renderer.hpp"
#include "rendbev/scene.hpp"
#include "rendbev/scene_sim.hpp"
#include "rendbev/trainer.hpp"

namespace rendbev {

enum class FieldPolicy { kPerFrame, kReferenceShadow };
FieldPolicy parse_field_policy(const std::string& name);
std::string to_string(FieldPolicy p);

enum class ClassWeighting { kInverseFrequency, kUniform };

struct ExperimentConfig {
  std::uint64_t scene_seed = 1;
  Difficulty difficulty = Difficulty::kStatic;
  int frames = 40;
  double step = 0.5;       ///< metres between frames
  double yaw_rate = 0.0;   ///< radians per metre
  int reference = 0;
  Intrinsics camera = Intrinsics::centered(128.0, 256, 128);
  BevSpec bev = BevSpec::desk_default();
  RenderConfig render;
  TrainConfig train;
  FrameOffsetPolicy policy = FrameOffsetPolicy::standard();
  FieldPolicy field = FieldPolicy::kPerFrame;
  double corruption = 0.0;
  ClassWeighting weighting = ClassWeighting::kInverseFrequency;
  double sigma_solid = kDefaultSolidDensity;
  std::filesystem::path output_dir = "out";

  /// Defaults with both seeds taken from RENDBEV_SEED when it is set.
  static ExperimentConfig defaults();
  /// Overlays the keys present in `j` onto `base`. Throws ConfigError on
  /// unknown keys or wrong types.
  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Everything a training run reads: the generated sequence and its ground truth.
struct Dataset {
  Scene scene;
  std::vector<Pose> poses;
  Intrinsics camera;
  BevSpec bev;
  int reference = 0;
  std::vector<LabelImage> seg;
  std::vector<DepthImage> depth;
  LabelImage gt_bev_full;  ///< labels of every cell
  LabelImage gt_bev;       ///< void outside the ground visible to the reference camera

  int frame_count() const { return static_cast<int>(poses.size()); }
  double reference_height() const;
};

Dataset generate_dataset(const ExperimentConfig& cfg);
/// scene.json, poses.txt, seg_NNN.pgm/ppm, depth_NNN.pgm, gt_bev.pgm/ppm.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Inverse-frequency weights over the classes present in the visible ground
/// truth, normalised to mean 1 over those classes; absent classes get 1.
LossConfig class_weights(const LabelImage& gt, int class_count, ClassWeighting mode);

/// Per-frame density fields and (possibly corrupted) labels for training.
TrainData build_train_data(const Dataset& data, const ExperimentConfig& cfg);

struct RunOutcome {
  TrainResult train;
  LabelImage prediction;
  IouScores scores;             ///< over cells with non-void visible ground truth
  IouScores supervised_scores;  ///< over supervised cells with non-void ground truth
  double supervised_accuracy = 0.0;
  std::uint64_t supervised_cells = 0;
};

RunOutcome run_training(const Dataset& data, const ExperimentConfig& cfg);

/// Scores a predicted label grid against the visible ground truth.
/// Throws DataError when no cell is evaluated.
IouScores evaluate_prediction(const LabelImage& pred, const LabelImage& gt, int class_count);
nlohmann::json metrics_json(const IouScores& s, const std::vector<ClassInfo>& classes);

/// IPM of the reference frame's perspective labels.
LabelImage ipm_baseline(const Dataset& data);

/// Static-scene gradient check instance with random logits in [-1, 1).
GradCheckProblem build_gradcheck_problem(const Dataset& data, const ExperimentConfig& cfg, int patches);
nlohmann::json gradcheck_json(const GradCheckReport& r);

enum class SweepAxis { kPatches, kTau, kM };
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double miou = 0.0;
  double sec_per_iter = 0.0;
};

std::vector<SweepRow> run_sweep(const Dataset& data, const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values, const std::vector<std::uint64_t>& seeds);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AblationRow {
  std::string name;
  bool future = true;
  FieldPolicy field = FieldPolicy::kPerFrame;
  double miou = 0.0;
  std::uint64_t supervised_cells = 0;
  double sec_per_iter = 0.0;
};

/// Full policy, adjacent frames only, and the reference-frame shadow field.
std::vector<AblationRow> run_ablation(const Dataset& data, const ExperimentConfig& cfg);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace rendbev
