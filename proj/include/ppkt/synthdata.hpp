#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppkt/dense_array.hpp"
#include "ppkt/geometry.hpp"
#include "ppkt/rng.hpp"

namespace ppkt {

using Vec3 = std::array<double, 3>;

struct Aabb {
  Vec3 min{};
  Vec3 max{};

  bool contains(const Aabb& other) const;
  bool contains(const Vec3& p, double margin = 0.0) const;
  Vec3 center() const;
  /// Distance from p to the box boundary (zero on the surface).
  double surface_distance(const Vec3& p) const;
  friend bool operator==(const Aabb&, const Aabb&) = default;
};

struct SceneBox {
  Aabb box;
  Vec3 color{};
  int class_id = 0;
  friend bool operator==(const SceneBox&, const SceneBox&) = default;
};

/// World frame is +Y up; boxes[0] is always the floor slab (class 0).
struct SceneSpec {
  std::vector<SceneBox> boxes;
  Aabb bounds;
  int class_count = 6;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct CameraPose {
  Vec3 position{};
  Vec3 target{};
};

/// Camera axes in world coordinates: columns of the camera-to-world rotation.
struct CameraBasis {
  Vec3 right{};
  Vec3 down{};
  Vec3 forward{};
  Vec3 origin{};

  Vec3 to_world(const Vec3& cam) const;
};

/// Throws std::invalid_argument for a degenerate look-at.
CameraBasis camera_basis(const CameraPose& pose);

struct RgbdFrame {
  DenseArray color;         // H x W x 3 in [0, 1]
  DenseArray depth;         // H x W meters, 0 = miss
  std::vector<int> labels;  // H * W row-major, -1 = miss
  CameraIntrinsics intr;

  int label(std::size_t v, std::size_t u) const { return labels[v * intr.width + u]; }
  friend bool operator==(const RgbdFrame&, const RgbdFrame&) = default;
};

SceneSpec generate_scene(Rng& rng, std::size_t box_count, int class_count = 6);

/// Position uniform in the free space of the room, looking at a random box centre.
CameraPose sample_camera_pose(const SceneSpec& scene, Rng& rng);

/// Ray-casts the scene. Depth is z-depth stored at float precision; colour is
/// box colour times a headlight diffuse factor 0.6 + 0.4 |n . ray| plus
/// Gaussian noise, clamped to [0, 1].
RgbdFrame render_frame(const SceneSpec& scene, const CameraPose& pose, const CameraIntrinsics& intr,
                       double noise_sigma, Rng& rng);

struct GenConfig {
  std::size_t scenes = 8;
  std::size_t frames_per_scene = 32;
  std::uint64_t seed = 7;
  int class_count = 6;
  std::size_t min_boxes = 3;
  std::size_t max_boxes = 8;
  double noise_sigma = 0.01;
  /// Frames with fewer valid pixels are re-rendered from a new pose.
  std::size_t min_valid_pixels = 512;
  CameraIntrinsics intr;
};

std::vector<RgbdFrame> generate_frames(const GenConfig& cfg);

// On-disk dataset: one PPKF file per frame plus a text manifest.

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_frame(const std::filesystem::path& path, const RgbdFrame& frame, int class_count);
RgbdFrame read_frame(const std::filesystem::path& path, int* class_count = nullptr);

struct Dataset {
  std::vector<RgbdFrame> frames;
  std::vector<std::string> files;
  int class_count = 6;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestName = "manifest.txt";

void write_dataset(const std::filesystem::path& dir, const std::vector<RgbdFrame>& frames, int class_count,
                   std::uint64_t seed);
Dataset read_dataset(const std::filesystem::path& dir);

/// Quantises colour the way the frame file stores it (round(255 c) / 255).
DenseArray quantize_color(const DenseArray& color);

}  // namespace ppkt
