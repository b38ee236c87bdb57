// SPDX-License-Identifier: Apache-2.0
//
// Artifact formats. Every writer has a reader that restores the data
// exactly (depth images up to millimetre quantization).
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rendbev/bev_grid.hpp"
#include "rendbev/geometry.hpp"
#include "rendbev/raster.hpp"
#include "rendbev/renderer.hpp"
#include "rendbev/scene.hpp"
#include "rendbev/trainer.hpp"

namespace rendbev::io {

namespace fs = std::filesystem;
using Palette = std::vector<std::array<std::uint8_t, 3>>;

/// Binary 8-bit PGM (P5), one label per pixel.
void write_label_pgm(const fs::path& path, const LabelImage& img);
LabelImage read_label_pgm(const fs::path& path);

/// Binary PPM (P6) colouring labels by palette; labels outside it are black.
void write_label_ppm(const fs::path& path, const LabelImage& img, const Palette& palette);

/// 16-bit PGM holding depth in millimetres. Depths at or beyond 65.535 m
/// saturate to 65535, which reads back as `far_value`.
void write_depth_pgm(const fs::path& path, const DepthImage& depth);
DepthImage read_depth_pgm(const fs::path& path, double far_value);

/// BEV label grids are stored with the farthest row at the top of the image.
LabelImage flip_rows(const LabelImage& img);

/// One camera-to-world pose per line: 12 numbers, row-major [R | t].
void write_poses(const fs::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(const fs::path& path);

/// "BEVG", u32 rows, cols, classes, f64 cell, origin_x, origin_z, then
/// rows*cols*classes little-endian f32 logits.
void save_grid(const fs::path& path, const BevGrid& grid);
BevGrid load_grid(const fs::path& path);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

nlohmann::json intrinsics_to_json(const Intrinsics& intr);
Intrinsics intrinsics_from_json(const nlohmann::json& j);

nlohmann::json bev_spec_to_json(const BevSpec& spec);
BevSpec bev_spec_from_json(const nlohmann::json& j);

/// Sample-by-sample record of one rendered ray.
nlohmann::json ray_trace_json(const RayIntegration& ray);

/// iteration, mean_loss, kept_ray_fraction; mean_loss is empty for skipped iterations.
void write_loss_csv(const fs::path& path, const std::vector<IterationStats>& history);

void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

void write_text(const fs::path& path, const std::string& text);
std::string read_binary(const fs::path& path);

}  // namespace rendbev::io
