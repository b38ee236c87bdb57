// SPDX-License-Identifier: Apache-2.0
#include "rendbev/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rendbev/error.hpp"

namespace rendbev {

// ---------------------------------------------------------------------------
// Scene primitives

namespace {

// World offset (dx, dz) into the local frame of a shape rotated by `yaw`.
Eigen::Vector2d to_local(double yaw, double dx, double dz) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * dx - s * dz, s * dx + c * dz};
}

constexpr double kContainEps = 1e-9;

}  // namespace

bool Footprint::contains(double x, double z) const {
  const Eigen::Vector2d l = to_local(yaw, x - center_x, z - center_z);
  return std::abs(l.x()) <= 0.5 * size_x + kContainEps && std::abs(l.y()) <= 0.5 * size_z + kContainEps;
}

std::array<Eigen::Vector2d, 4> Footprint::corners() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  std::array<Eigen::Vector2d, 4> out;
  const double hx = 0.5 * size_x, hz = 0.5 * size_z;
  const double lx[4] = {-hx, hx, hx, -hx};
  const double lz[4] = {-hz, -hz, hz, hz};
  for (int i = 0; i < 4; ++i) out[i] = {center_x + c * lx[i] + s * lz[i], center_z - s * lx[i] + c * lz[i]};
  return out;
}

bool Box::contains(const Vec3& p) const {
  if (std::abs(p.y() - center.y()) > 0.5 * size.y() + kContainEps) return false;
  return footprint().contains(p.x(), p.z());
}

std::optional<double> Box::intersect(const Ray& ray, double t_min) const {
  const Eigen::Vector2d o = to_local(yaw, ray.origin.x() - center.x(), ray.origin.z() - center.z());
  const Eigen::Vector2d d = to_local(yaw, ray.direction.x(), ray.direction.z());
  const double orig[3] = {o.x(), ray.origin.y() - center.y(), o.y()};
  const double dir[3] = {d.x(), ray.direction.y(), d.y()};
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double half = 0.5 * size[a];
    if (std::abs(dir[a]) < 1e-15) {
      if (std::abs(orig[a]) > half) return std::nullopt;
      continue;
    }
    double ta = (-half - orig[a]) / dir[a];
    double tb = (half - orig[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t0 < t_min) return std::nullopt;
  return t0;
}

int Scene::ground_class_at(double x, double z) const {
  for (auto it = ground_regions.rbegin(); it != ground_regions.rend(); ++it) {
    if (it->area.contains(x, z)) return it->class_id;
  }
  return ground_class;
}

namespace {

bool footprints_overlap(const Footprint& a, const Footprint& b) {
  const auto ca = a.corners(), cb = b.corners();
  for (const auto* poly : {&ca, &cb}) {
    for (int e = 0; e < 2; ++e) {
      const Eigen::Vector2d edge = (*poly)[e + 1] - (*poly)[e];
      const Eigen::Vector2d axis(-edge.y(), edge.x());
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (int i = 0; i < 4; ++i) {
        amin = std::min(amin, axis.dot(ca[i]));
        amax = std::max(amax, axis.dot(ca[i]));
        bmin = std::min(bmin, axis.dot(cb[i]));
        bmax = std::max(bmax, axis.dot(cb[i]));
      }
      if (amax <= bmin + 1e-9 || bmax <= amin + 1e-9) return false;
    }
  }
  return true;
}

}  // namespace

void Scene::validate() const {
  const int n = class_count();
  if (n < 2) throw ConfigError("scene: at least two classes required");
  if (n > 255) throw ConfigError("scene: at most 255 classes supported");
  if (ground_class < 0 || ground_class >= n) throw ConfigError("scene: ground_class out of range");
  if (void_class < n || void_class > 255) throw ConfigError("scene: void_class must not collide with a class");
  if (!std::isfinite(ground_y)) throw ConfigError("scene: ground_y must be finite");
  for (const auto& r : ground_regions) {
    if (r.class_id < 0 || r.class_id >= n) throw ConfigError("scene: ground region class out of range");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    std::ostringstream where;
    where << "scene: box " << i;
    if (b.class_id < 0 || b.class_id >= n) throw ConfigError(where.str() + " has an unknown class");
    if (!(b.size.minCoeff() > 0.0) || !b.center.allFinite()) throw ConfigError(where.str() + " is degenerate");
    if (b.bottom_y() > ground_y + 1e-6) throw ConfigError(where.str() + " sinks below the ground");
    for (std::size_t j = 0; j < i; ++j) {
      if (footprints_overlap(b.footprint(), boxes[j].footprint())) {
        std::ostringstream os;
        os << where.str() << " overlaps box " << j;
        throw ConfigError(os.str());
      }
    }
  }
}

std::array<std::uint8_t, 3> Scene::color_of(int class_id) const {
  if (class_id >= 0 && class_id < class_count()) return classes[class_id].rgb;
  return {0, 0, 0};
}

std::vector<ClassInfo> default_palette() {
  return {{"road", {128, 64, 128}},
          {"sidewalk", {244, 35, 232}},
          {"terrain", {152, 251, 152}},
          {"building", {70, 70, 70}},
          {"car", {0, 0, 142}}};
}

// ---------------------------------------------------------------------------
// Generation

Difficulty parse_difficulty(const std::string& name) {
  if (name == "flat") return Difficulty::kFlat;
  if (name == "static") return Difficulty::kStatic;
  if (name == "occlusion") return Difficulty::kOcclusion;
  throw ConfigError("unknown difficulty '" + name + "' (expected flat, static or occlusion)");
}

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kFlat:
      return "flat";
    case Difficulty::kStatic:
      return "static";
    case Difficulty::kOcclusion:
      return "occlusion";
  }
  return "flat";
}

namespace {

constexpr double kStripStart = -60.0;
constexpr double kStripEnd = 260.0;

GroundRegion strip(double x0, double x1, int cls) {
  return {{0.5 * (x0 + x1), 0.5 * (kStripStart + kStripEnd), x1 - x0, kStripEnd - kStripStart, 0.0}, cls};
}

Box make_box(double cx, double cz, double width, double height, double length, double yaw, int cls,
             double ground_y) {
  return Box{Vec3(cx, ground_y - 0.5 * height, cz), Vec3(width, height, length), yaw, cls};
}

constexpr double kOccluderMinHeight = 2.5;

}  // namespace

Scene generate_scene(std::uint64_t seed, Difficulty difficulty, double camera_height) {
  if (!(camera_height > 0.0)) throw ConfigError("generate_scene: camera height must be positive");
  Rng rng(seed);
  Scene s;
  s.ground_y = camera_height;
  s.classes = default_palette();
  s.ground_class = classes::kRoad;

  const double road_half = rng.uniform(4.0, 5.0);
  const double walk = rng.uniform(2.0, 3.0);
  s.ground_regions.push_back(strip(-road_half - walk, -road_half, classes::kSidewalk));
  s.ground_regions.push_back(strip(road_half, road_half + walk, classes::kSidewalk));
  if (difficulty == Difficulty::kFlat) return s;

  const double verge = road_half + walk;
  s.ground_regions.push_back(strip(-verge - 80.0, -verge, classes::kTerrain));
  s.ground_regions.push_back(strip(verge, verge + 80.0, classes::kTerrain));

  // Occluder first so parked cars can avoid it.
  double occ_z0 = 1e9, occ_z1 = -1e9;
  if (difficulty == Difficulty::kOcclusion) {
    const double width = 2.5, height = 3.0, length = 7.0;
    const double cz = rng.uniform(9.5, 12.0);
    const double cx = -(road_half - 0.3 - 0.5 * width);
    s.boxes.push_back(make_box(cx, cz, width, height, length, 0.0, classes::kCar, s.ground_y));
    occ_z0 = cz - 0.5 * length - 1.0;
    occ_z1 = cz + 0.5 * length + 1.0;
  }

  for (int side : {-1, 1}) {
    // Buildings set back from the sidewalk, with terrain gaps between them.
    double z = rng.uniform(-12.0, -4.0);
    while (z < 80.0) {
      const double length = rng.uniform(8.0, 16.0);
      const double setback = rng.uniform(1.0, 3.0);
      const double depth = rng.uniform(8.0, 14.0);
      const double height = rng.uniform(6.0, 15.0);
      s.boxes.push_back(make_box(side * (verge + setback + 0.5 * depth), z + 0.5 * length, depth, height, length,
                                 0.0, classes::kBuilding, s.ground_y));
      z += length + rng.uniform(3.0, 8.0);
    }
    // Parked cars along the kerb.
    double cz = rng.uniform(5.0, 12.0);
    while (cz < 60.0) {
      const double length = 4.2, width = 1.8;
      const double yaw = rng.uniform(-0.05, 0.05);
      const bool blocked = side < 0 && cz + 0.5 * length > occ_z0 && cz - 0.5 * length < occ_z1;
      if (!blocked) {
        s.boxes.push_back(make_box(side * (road_half - 0.3 - 0.5 * width), cz, width, 1.5, length, yaw,
                                   classes::kCar, s.ground_y));
      }
      cz += length + rng.uniform(2.0, 14.0);
    }
  }
  s.validate();
  return s;
}

std::optional<std::size_t> occluder_index(const Scene& scene) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const Box& b = scene.boxes[i];
    if (b.class_id != classes::kCar || b.size.y() < kOccluderMinHeight) continue;
    if (!best || b.size.y() > scene.boxes[*best].size.y()) best = i;
  }
  return best;
}

std::vector<Pose> straight_trajectory(int n, double step_m, double yaw_rate) {
  if (n < 2) throw ConfigError("trajectory: need at least two frames");
  if (!(step_m > 0.0)) throw ConfigError("trajectory: step must be positive");
  std::vector<Pose> poses;
  poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double s = i * step_m;
    const double heading = s * yaw_rate;
    Vec3 t;
    if (yaw_rate == 0.0) {
      t = Vec3(0.0, 0.0, s);
    } else {
      t = Vec3((1.0 - std::cos(heading)) / yaw_rate, 0.0, std::sin(heading) / yaw_rate);
    }
    poses.push_back(Pose::from_yaw(heading, t));
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Ground truth

std::optional<SurfaceHit> raycast(const Scene& scene, const Ray& ray) {
  std::optional<SurfaceHit> best;
  if (ray.direction.y() > 0.0 && ray.origin.y() < scene.ground_y) {
    const double t = (scene.ground_y - ray.origin.y()) / ray.direction.y();
    const Vec3 p = ray.at(t);
    best = SurfaceHit{t, scene.ground_class_at(p.x(), p.z()), -1};
  }
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const auto t = scene.boxes[i].intersect(ray, 0.0);
    if (t && (!best || *t < best->t)) best = SurfaceHit{*t, scene.boxes[i].class_id, static_cast<int>(i)};
  }
  return best;
}

namespace {

struct ViewHit {
  std::optional<SurfaceHit> hit;
  double depth = 0.0;  // view-frame z
};

ViewHit cast_pixel(const Scene& scene, const Pose& pose, const Intrinsics& intr, double u, double v) {
  const Ray cam = pixel_ray(intr, u, v);
  const Ray world{pose.translation(), pose.rotate(cam.direction)};
  ViewHit out;
  out.hit = raycast(scene, world);
  if (out.hit) out.depth = out.hit->t * cam.direction.z();
  return out;
}

}  // namespace

int raycast_label(const Scene& scene, const Pose& pose, const Intrinsics& intr, double u, double v, double z_far) {
  const ViewHit h = cast_pixel(scene, pose, intr, u, v);
  if (!h.hit || h.depth > z_far) return scene.void_class;
  return h.hit->class_id;
}

double raycast_depth(const Scene& scene, const Pose& pose, const Intrinsics& intr, double u, double v,
                     double z_near, double z_far) {
  const ViewHit h = cast_pixel(scene, pose, intr, u, v);
  if (!h.hit || h.depth > z_far) return z_far;
  return std::max(h.depth, z_near);
}

LabelImage gt_perspective_seg(const Scene& scene, const Pose& pose, const Intrinsics& intr, double z_far) {
  LabelImage out(intr.height(), intr.width(), 0);
  for (int r = 0; r < intr.height(); ++r) {
    for (int c = 0; c < intr.width(); ++c) {
      out.at(r, c) = static_cast<std::uint8_t>(raycast_label(scene, pose, intr, c + 0.5, r + 0.5, z_far));
    }
  }
  return out;
}

DepthImage render_depth_image(const Scene& scene, const Pose& pose, const Intrinsics& intr, double z_near,
                              double z_far) {
  DepthImage out(intr.height(), intr.width(), z_far);
  for (int r = 0; r < intr.height(); ++r) {
    for (int c = 0; c < intr.width(); ++c) {
      out.at(r, c) = raycast_depth(scene, pose, intr, c + 0.5, r + 0.5, z_near, z_far);
    }
  }
  return out;
}

LabelImage gt_bev(const Scene& scene, const BevSpec& spec, const Pose& pose) {
  LabelImage out(spec.rows(), spec.cols(), static_cast<std::uint8_t>(scene.ground_class));
  for (int r = 0; r < spec.rows(); ++r) {
    for (int c = 0; c < spec.cols(); ++c) {
      const GroundPoint g = cell_center(spec, r, c);
      const Vec3 w = pose.apply(Vec3(g.x, 0.0, g.z));
      int label = scene.ground_class_at(w.x(), w.z());
      double tallest = 0.0;
      for (const Box& b : scene.boxes) {
        if (b.size.y() > tallest && b.footprint().contains(w.x(), w.z())) {
          tallest = b.size.y();
          label = b.class_id;
        }
      }
      out.at(r, c) = static_cast<std::uint8_t>(label);
    }
  }
  return out;
}

LabelImage corrupt_labels(const LabelImage& seg, double rate, int class_count, int void_class, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("corrupt_labels: rate must lie in [0, 1]");
  LabelImage out = seg;
  // Candidate labels: every class plus void.
  std::vector<int> labels;
  for (int c = 0; c < class_count; ++c) labels.push_back(c);
  labels.push_back(void_class);
  for (auto& px : out.data) {
    if (!(rng.uniform() < rate)) continue;
    const auto self = std::find(labels.begin(), labels.end(), px);
    if (self == labels.end()) {
      px = static_cast<std::uint8_t>(labels[rng.below(labels.size())]);
      continue;
    }
    std::size_t pick = rng.below(labels.size() - 1);
    if (pick >= static_cast<std::size_t>(self - labels.begin())) ++pick;
    px = static_cast<std::uint8_t>(labels[pick]);
  }
  return out;
}

MaskGrid box_shadow(const Scene& scene, std::size_t box_index, const BevSpec& spec, const Pose& pose) {
  if (box_index >= scene.boxes.size()) throw ConfigError("box_shadow: box index out of range");
  const Box& box = scene.boxes[box_index];
  MaskGrid out(spec.rows(), spec.cols(), 0);
  for (int r = 0; r < spec.rows(); ++r) {
    for (int c = 0; c < spec.cols(); ++c) {
      const GroundPoint g = cell_center(spec, r, c);
      const Vec3 ground = pose.apply(Vec3(g.x, scene.ground_y - pose.translation().y(), g.z));
      const Vec3 to = ground - pose.translation();
      const double dist = to.norm();
      if (dist <= 0.0 || box.footprint().contains(ground.x(), ground.z())) continue;
      const auto t = box.intersect(Ray{pose.translation(), to / dist}, 0.0);
      if (t && *t < dist) out.at(r, c) = 1;
    }
  }
  return out;
}

}  // namespace rendbev
