// SPDX-License-Identifier: Apache-2.0
#include "rendbev/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "rendbev/error.hpp"

namespace rendbev::io {

namespace {

std::string ctx(const fs::path& p) { return "'" + p.string() + "'"; }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + ctx(path) + " for writing");
  return f;
}

void finish(std::ofstream& f, const fs::path& path) {
  f.flush();
  if (!f) throw DataError("write failed for " + ctx(path));
}

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

// Parses "P5 w h maxval" with comments, returning the offset of the pixel data.
PnmHeader parse_pnm_header(const std::string& buf, const fs::path& path) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_ws();
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    return buf.substr(start, pos - start);
  };
  auto number = [&](const char* what) {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const int v = std::stoi(t, &used);
      if (used != t.size() || v <= 0) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw DataError(ctx(path) + ": bad " + std::string(what) + " '" + t + "' near byte " + std::to_string(pos));
    }
  };
  h.magic = token();
  h.width = number("width");
  h.height = number("height");
  h.maxval = number("maxval");
  if (pos >= buf.size()) throw DataError(ctx(path) + ": truncated header");
  h.data_offset = pos + 1;  // single whitespace byte after maxval
  return h;
}

}  // namespace

std::string read_binary(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + ctx(path));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  finish(f, path);
}

void write_label_pgm(const fs::path& path, const LabelImage& img) {
  auto f = open_out(path);
  f << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  finish(f, path);
}

LabelImage read_label_pgm(const fs::path& path) {
  const std::string buf = read_binary(path);
  const PnmHeader h = parse_pnm_header(buf, path);
  if (h.magic != "P5" || h.maxval > 255) throw DataError(ctx(path) + ": not an 8-bit binary PGM");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (buf.size() - h.data_offset < n) {
    throw DataError(ctx(path) + ": pixel data truncated at byte " + std::to_string(buf.size()) + ", expected " +
                    std::to_string(h.data_offset + n));
  }
  LabelImage img(h.height, h.width);
  std::memcpy(img.data.data(), buf.data() + h.data_offset, n);
  return img;
}

void write_label_ppm(const fs::path& path, const LabelImage& img, const Palette& palette) {
  auto f = open_out(path);
  f << "P6\n" << img.cols << " " << img.rows << "\n255\n";
  std::vector<std::uint8_t> rgb(img.data.size() * 3, 0);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (img.data[i] < palette.size()) {
      const auto& c = palette[img.data[i]];
      std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
  }
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  finish(f, path);
}

void write_depth_pgm(const fs::path& path, const DepthImage& depth) {
  auto f = open_out(path);
  f << "P5\n" << depth.cols << " " << depth.rows << "\n65535\n";
  std::vector<unsigned char> bytes(depth.data.size() * 2);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const double mm = std::round(depth.data[i] * 1000.0);
    const auto v = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    bytes[2 * i] = static_cast<unsigned char>(v >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  finish(f, path);
}

DepthImage read_depth_pgm(const fs::path& path, double far_value) {
  const std::string buf = read_binary(path);
  const PnmHeader h = parse_pnm_header(buf, path);
  if (h.magic != "P5" || h.maxval != 65535) throw DataError(ctx(path) + ": not a 16-bit binary PGM");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (buf.size() - h.data_offset < 2 * n) throw DataError(ctx(path) + ": pixel data truncated");
  DepthImage d(h.height, h.width);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + h.data_offset);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = (p[2 * i] << 8) | p[2 * i + 1];
    d.data[i] = v == 65535 ? far_value : v / 1000.0;
  }
  return d;
}

LabelImage flip_rows(const LabelImage& img) {
  LabelImage out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    std::copy_n(&img.at(img.rows - 1 - r, 0), img.cols, &out.at(r, 0));
  }
  return out;
}

void write_poses(const fs::path& path, const std::vector<Pose>& poses) {
  auto f = open_out(path);
  f << std::setprecision(17);
  for (const Pose& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) f << p.rotation()(r, c) << ' ';
      f << p.translation()(r) << (r == 2 ? '\n' : ' ');
    }
  }
  finish(f, path);
}

std::vector<Pose> read_poses(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + ctx(path));
  std::vector<Pose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::array<double, 12> v{};
    for (double& x : v) {
      if (!(ls >> x)) throw DataError(ctx(path) + ": line " + std::to_string(lineno) + " needs 12 numbers");
    }
    Mat3 R;
    Vec3 t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R(r, c) = v[4 * r + c];
      t(r) = v[4 * r + 3];
    }
    try {
      poses.emplace_back(R, t);
    } catch (const Error& e) {
      throw DataError(ctx(path) + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return poses;
}

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const std::string& buf, std::size_t& off, const fs::path& path, const char* field) {
  if (off + sizeof(T) > buf.size()) {
    throw DataError(ctx(path) + ": truncated at offset " + std::to_string(off) + " reading " + field + " (file is " +
                    std::to_string(buf.size()) + " bytes)");
  }
  unsigned char b[sizeof(T)];
  std::memcpy(b, buf.data() + off, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  off += sizeof(T);
  return v;
}

constexpr char kGridMagic[4] = {'B', 'E', 'V', 'G'};
constexpr std::uint32_t kMaxDim = 1u << 16;

}  // namespace

void save_grid(const fs::path& path, const BevGrid& grid) {
  std::string out(kGridMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.spec.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.spec.cols()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.class_count));
  put_le<double>(out, grid.spec.cell_size());
  put_le<double>(out, grid.spec.origin_x());
  put_le<double>(out, grid.spec.origin_z());
  out.reserve(out.size() + grid.logits.size() * 4);
  for (float v : grid.logits) put_le<float>(out, v);
  auto f = open_out(path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  finish(f, path);
}

BevGrid load_grid(const fs::path& path) {
  const std::string buf = read_binary(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), kGridMagic, 4) != 0) {
    throw DataError(ctx(path) + ": bad magic at offset 0 (expected BEVG)");
  }
  std::size_t off = 4;
  const auto rows = get_le<std::uint32_t>(buf, off, path, "rows");
  const auto cols = get_le<std::uint32_t>(buf, off, path, "cols");
  const auto classes = get_le<std::uint32_t>(buf, off, path, "classes");
  if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim || classes < 2 || classes > 255) {
    throw DataError(ctx(path) + ": implausible header at offset 4 (rows " + std::to_string(rows) + ", cols " +
                    std::to_string(cols) + ", classes " + std::to_string(classes) + ")");
  }
  const double cell = get_le<double>(buf, off, path, "cell size");
  const double ox = get_le<double>(buf, off, path, "origin_x");
  const double oz = get_le<double>(buf, off, path, "origin_z");
  if (!(cell > 0.0) || !std::isfinite(cell) || !std::isfinite(ox) || !std::isfinite(oz)) {
    throw DataError(ctx(path) + ": invalid geometry at offset 16");
  }
  const std::size_t n = static_cast<std::size_t>(rows) * cols * classes;
  const std::size_t expected = off + 4 * n;
  if (buf.size() != expected) {
    throw DataError(ctx(path) + ": size mismatch at offset " + std::to_string(std::min(buf.size(), expected)) +
                    ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(buf.size()));
  }
  BevGrid g(BevSpec(static_cast<int>(rows), static_cast<int>(cols), cell, ox, oz), static_cast<int>(classes));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = off;
    const float v = get_le<float>(buf, off, path, "logit");
    if (!std::isfinite(v)) throw DataError(ctx(path) + ": non-finite logit at offset " + std::to_string(at));
    g.logits[i] = v;
  }
  return g;
}

using nlohmann::json;

namespace {

json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json footprint(const Footprint& f) {
  return {{"center_x", f.center_x}, {"center_z", f.center_z}, {"size_x", f.size_x}, {"size_z", f.size_z},
          {"yaw", f.yaw}};
}

Footprint footprint(const json& j) {
  return {j.at("center_x").get<double>(), j.at("center_z").get<double>(), j.at("size_x").get<double>(),
          j.at("size_z").get<double>(), j.value("yaw", 0.0)};
}

}  // namespace

json scene_to_json(const Scene& scene) {
  json j;
  j["ground_y"] = scene.ground_y;
  j["ground_class"] = scene.ground_class;
  j["void_class"] = scene.void_class;
  j["classes"] = json::array();
  for (const auto& c : scene.classes) j["classes"].push_back({{"name", c.name}, {"rgb", c.rgb}});
  j["ground_regions"] = json::array();
  for (const auto& g : scene.ground_regions) {
    j["ground_regions"].push_back({{"area", footprint(g.area)}, {"class", g.class_id}});
  }
  j["boxes"] = json::array();
  for (const auto& b : scene.boxes) {
    j["boxes"].push_back({{"center", vec3(b.center)}, {"size", vec3(b.size)}, {"yaw", b.yaw}, {"class", b.class_id}});
  }
  return j;
}

Scene scene_from_json(const json& j) {
  Scene s;
  try {
    s.ground_y = j.at("ground_y").get<double>();
    s.ground_class = j.value("ground_class", 0);
    s.void_class = j.value("void_class", 255);
    for (const auto& c : j.at("classes")) {
      s.classes.push_back({c.at("name").get<std::string>(), c.at("rgb").get<std::array<std::uint8_t, 3>>()});
    }
    for (const auto& g : j.value("ground_regions", json::array())) {
      s.ground_regions.push_back({footprint(g.at("area")), g.at("class").get<int>()});
    }
    for (const auto& b : j.value("boxes", json::array())) {
      Box box;
      box.center = vec3(b.at("center"));
      box.size = vec3(b.at("size"));
      box.yaw = b.value("yaw", 0.0);
      box.class_id = b.at("class").get<int>();
      s.boxes.push_back(box);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("scene description: ") + e.what());
  }
  s.validate();
  return s;
}

json intrinsics_to_json(const Intrinsics& intr) {
  return {{"fx", intr.fx()}, {"fy", intr.fy()}, {"cx", intr.cx()}, {"cy", intr.cy()},
          {"width", intr.width()}, {"height", intr.height()}};
}

Intrinsics intrinsics_from_json(const json& j) {
  try {
    return Intrinsics(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                      j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("camera intrinsics: ") + e.what());
  }
}

json bev_spec_to_json(const BevSpec& spec) {
  return {{"rows", spec.rows()}, {"cols", spec.cols()}, {"cell_size", spec.cell_size()},
          {"origin_x", spec.origin_x()}, {"origin_z", spec.origin_z()}};
}

BevSpec bev_spec_from_json(const json& j) {
  try {
    return BevSpec(j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("cell_size").get<double>(),
                   j.at("origin_x").get<double>(), j.at("origin_z").get<double>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("BEV layout: ") + e.what());
  }
}

json ray_trace_json(const RayIntegration& ray) {
  const int C = ray.class_count();
  json samples = json::array();
  for (std::size_t i = 0; i < ray.depths.size(); ++i) {
    json probs = json::array();
    for (int c = 0; c < C; ++c) probs.push_back(ray.probs[i * C + c]);
    samples.push_back({{"depth", ray.depths[i]},
                       {"delta", ray.deltas[i]},
                       {"sigma", ray.sigmas[i]},
                       {"alpha", ray.alphas[i]},
                       {"transmittance", ray.transmittances[i]},
                       {"weight", ray.weights[i]},
                       {"cell", {ray.cells[i].row, ray.cells[i].col}},
                       {"in_bounds", ray.cells[i].in_bounds},
                       {"probs", probs}});
  }
  return {{"u", ray.u},
          {"v", ray.v},
          {"samples", samples},
          {"rendered", ray.rendered},
          {"residual_transmittance", ray.residual_transmittance},
          {"oob", ray.oob},
          {"kept", ray.kept}};
}

void write_loss_csv(const fs::path& path, const std::vector<IterationStats>& history) {
  std::ostringstream os;
  os << "iteration,mean_loss,kept_ray_fraction\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i) {
    os << i << ',';
    if (history[i].loss) os << *history[i].loss;
    os << ',' << history[i].kept_fraction << '\n';
  }
  write_text(path, os.str());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  const std::string text = read_binary(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(ctx(path) + ": " + e.what());
  }
}

}  // namespace rendbev::io
