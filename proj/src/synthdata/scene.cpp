#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ppkt/synthdata.hpp"

namespace ppkt {
namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double vdot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double vnorm(const Vec3& a) { return std::sqrt(vdot(a, a)); }
Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

// Per-class base colours; boxes jitter around these.
constexpr std::array<Vec3, 8> kPalette{{
    {0.55, 0.50, 0.45},  // floor
    {0.80, 0.25, 0.20},
    {0.20, 0.65, 0.30},
    {0.25, 0.35, 0.85},
    {0.85, 0.75, 0.20},
    {0.60, 0.30, 0.70},
    {0.20, 0.75, 0.75},
    {0.90, 0.55, 0.25},
}};

Vec3 class_base_color(int k, int class_count) {
  if (k < static_cast<int>(kPalette.size())) return kPalette[static_cast<std::size_t>(k)];
  // Spread any further classes around the hue circle.
  const double h = 6.0 * static_cast<double>(k) / static_cast<double>(class_count);
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  Vec3 c{};
  switch (static_cast<int>(h) % 6) {
    case 0: c = {1, x, 0}; break;
    case 1: c = {x, 1, 0}; break;
    case 2: c = {0, 1, x}; break;
    case 3: c = {0, x, 1}; break;
    case 4: c = {x, 0, 1}; break;
    default: c = {1, 0, x}; break;
  }
  return {0.2 + 0.6 * c[0], 0.2 + 0.6 * c[1], 0.2 + 0.6 * c[2]};
}

Vec3 jittered_color(int k, int class_count, Rng& rng) {
  Vec3 c = class_base_color(k, class_count);
  for (double& v : c) v = std::clamp(v + rng.uniform(-0.12, 0.12), 0.0, 1.0);
  return c;
}

// Slab test. Returns entry t (or +inf) and the axis of the entry face.
double intersect(const Aabb& box, const Vec3& origin, const Vec3& dir, int* axis) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int entry_axis = -1;
  for (int a = 0; a < 3; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (dir[i] == 0.0) {
      if (origin[i] < box.min[i] || origin[i] > box.max[i]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (box.min[i] - origin[i]) / dir[i];
    double t1 = (box.max[i] - origin[i]) / dir[i];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      entry_axis = a;
    }
    tmax = std::min(tmax, t1);
  }
  if (tmax < tmin || entry_axis < 0) return std::numeric_limits<double>::infinity();
  *axis = entry_axis;
  return tmin;
}

}  // namespace

bool Aabb::contains(const Aabb& other) const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (other.min[a] < min[a] || other.max[a] > max[a]) return false;
  }
  return true;
}

bool Aabb::contains(const Vec3& p, double margin) const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (p[a] < min[a] - margin || p[a] > max[a] + margin) return false;
  }
  return true;
}

Vec3 Aabb::center() const {
  return {(min[0] + max[0]) / 2, (min[1] + max[1]) / 2, (min[2] + max[2]) / 2};
}

double Aabb::surface_distance(const Vec3& p) const {
  double outside = 0.0;
  double inside = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < 3; ++a) {
    const double below = min[a] - p[a], above = p[a] - max[a];
    const double d = std::max(below, above);
    if (d > 0) outside += d * d;
    inside = std::min(inside, -d);
  }
  return outside > 0 ? std::sqrt(outside) : std::max(inside, 0.0);
}

Vec3 CameraBasis::to_world(const Vec3& cam) const {
  Vec3 w = origin;
  for (std::size_t a = 0; a < 3; ++a) w[a] += right[a] * cam[0] + down[a] * cam[1] + forward[a] * cam[2];
  return w;
}

CameraBasis camera_basis(const CameraPose& pose) {
  const Vec3 f = sub(pose.target, pose.position);
  const double len = vnorm(f);
  if (!(len > 1e-9)) throw std::invalid_argument("camera pose: look-at target equals the camera position");
  CameraBasis b;
  b.origin = pose.position;
  b.forward = scaled(f, 1.0 / len);
  Vec3 up{0, 1, 0};
  if (vnorm(cross(up, b.forward)) < 1e-6) up = {0, 0, 1};
  // right-handed camera: right = down x forward
  const Vec3 r = cross({-up[0], -up[1], -up[2]}, b.forward);
  b.right = scaled(r, 1.0 / vnorm(r));
  b.down = cross(b.forward, b.right);
  return b;
}

SceneSpec generate_scene(Rng& rng, std::size_t box_count, int class_count) {
  if (box_count == 0) throw std::invalid_argument("generate_scene: box_count must be at least 1");
  if (class_count < 2 || class_count > 127) throw std::invalid_argument("generate_scene: class_count must be in [2, 127]");
  SceneSpec scene;
  scene.class_count = class_count;
  scene.bounds = Aabb{{-3.0, -0.1, -3.0}, {3.0, 2.5, 3.0}};
  scene.boxes.push_back(SceneBox{Aabb{{-3.0, -0.1, -3.0}, {3.0, 0.0, 3.0}}, jittered_color(0, class_count, rng), 0});
  for (std::size_t i = 0; i < box_count; ++i) {
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(class_count - 1)));
    const double sx = rng.uniform(0.3, 1.2), sz = rng.uniform(0.3, 1.2), sy = rng.uniform(0.3, 1.5);
    const double cx = rng.uniform(-2.4, 2.4), cz = rng.uniform(-2.4, 2.4);
    Aabb box{{cx - sx / 2, 0.0, cz - sz / 2}, {cx + sx / 2, sy, cz + sz / 2}};
    for (std::size_t a : {0u, 2u}) {
      const double shift = std::max(0.0, scene.bounds.min[a] - box.min[a]) - std::max(0.0, box.max[a] - scene.bounds.max[a]);
      box.min[a] += shift;
      box.max[a] += shift;
    }
    scene.boxes.push_back(SceneBox{box, jittered_color(k, class_count, rng), k});
  }
  return scene;
}

CameraPose sample_camera_pose(const SceneSpec& scene, Rng& rng) {
  if (scene.boxes.empty()) throw std::invalid_argument("sample_camera_pose: empty scene");
  const std::size_t first_object = scene.boxes.size() > 1 ? 1 : 0;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Vec3 pos{rng.uniform(scene.bounds.min[0] + 0.2, scene.bounds.max[0] - 0.2), rng.uniform(0.8, 2.0),
                   rng.uniform(scene.bounds.min[2] + 0.2, scene.bounds.max[2] - 0.2)};
    const std::size_t pick = first_object + rng.below(scene.boxes.size() - first_object);
    const Vec3 target = scene.boxes[pick].box.center();
    const bool blocked = std::any_of(scene.boxes.begin(), scene.boxes.end(),
                                     [&](const SceneBox& b) { return b.box.contains(pos, 0.05); });
    if (blocked || vnorm(sub(target, pos)) < 0.8) continue;
    return CameraPose{pos, target};
  }
  throw std::runtime_error("sample_camera_pose: no free camera position found");
}

RgbdFrame render_frame(const SceneSpec& scene, const CameraPose& pose, const CameraIntrinsics& intr,
                       double noise_sigma, Rng& rng) {
  intr.validate();
  if (!(noise_sigma >= 0)) throw std::invalid_argument("render_frame: noise_sigma must be >= 0");
  const CameraBasis basis = camera_basis(pose);
  if (!scene.bounds.contains(pose.position)) throw std::invalid_argument("render_frame: camera outside the room bounds");
  for (const auto& b : scene.boxes) {
    if (b.box.contains(pose.position)) throw std::invalid_argument("render_frame: camera inside a box");
  }

  const std::size_t h = intr.height, w = intr.width;
  RgbdFrame frame{DenseArray({h, w, 3}), DenseArray({h, w}), std::vector<int>(h * w, -1), intr};
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      // Camera-frame ray with unit Z, so the hit parameter is the z-depth.
      const Vec3 ray_cam{(static_cast<double>(u) - intr.cx) / intr.fx, (static_cast<double>(v) - intr.cy) / intr.fy, 1.0};
      Vec3 dir{};
      for (std::size_t a = 0; a < 3; ++a) {
        dir[a] = basis.right[a] * ray_cam[0] + basis.down[a] * ray_cam[1] + basis.forward[a] * ray_cam[2];
      }
      double best = std::numeric_limits<double>::infinity();
      int best_axis = -1;
      const SceneBox* hit = nullptr;
      for (const auto& b : scene.boxes) {
        int axis = -1;
        const double t = intersect(b.box, pose.position, dir, &axis);
        if (t > 1e-6 && t < best) {
          best = t;
          best_axis = axis;
          hit = &b;
        }
      }
      if (!hit) continue;

      const double cos_normal = std::abs(dir[static_cast<std::size_t>(best_axis)]) / vnorm(dir);
      const double shade = 0.6 + 0.4 * cos_normal;
      frame.depth.at(v, u) = static_cast<double>(static_cast<float>(best));
      frame.labels[v * w + u] = hit->class_id;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double c = hit->color[ch] * shade;
        if (noise_sigma > 0) c += noise_sigma * rng.normal();
        frame.color.at(v, u, ch) = std::clamp(c, 0.0, 1.0);
      }
    }
  }
  return frame;
}

std::vector<RgbdFrame> generate_frames(const GenConfig& cfg) {
  if (cfg.min_boxes == 0 || cfg.max_boxes < cfg.min_boxes) throw std::invalid_argument("generate_frames: bad box range");
  std::vector<RgbdFrame> frames;
  frames.reserve(cfg.scenes * cfg.frames_per_scene);
  for (std::size_t s = 0; s < cfg.scenes; ++s) {
    Rng scene_rng(cfg.seed, 2 * s);
    const std::size_t boxes = cfg.min_boxes + scene_rng.below(cfg.max_boxes - cfg.min_boxes + 1);
    const SceneSpec scene = generate_scene(scene_rng, boxes, cfg.class_count);
    Rng frame_rng(cfg.seed, 2 * s + 1);
    for (std::size_t f = 0; f < cfg.frames_per_scene; ++f) {
      for (int attempt = 0;; ++attempt) {
        const CameraPose pose = sample_camera_pose(scene, frame_rng);
        RgbdFrame frame = render_frame(scene, pose, cfg.intr, cfg.noise_sigma, frame_rng);
        const auto valid = static_cast<std::size_t>(std::count_if(frame.labels.begin(), frame.labels.end(), [](int l) { return l >= 0; }));
        if (valid >= cfg.min_valid_pixels || attempt >= 100) {
          frames.push_back(std::move(frame));
          break;
        }
      }
    }
  }
  return frames;
}

}  // namespace ppkt
