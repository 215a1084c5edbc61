#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ppkt/dense_array.hpp"
#include "ppkt/rng.hpp"

namespace ppkt {

/// Pinhole camera. Pixel (u, v) is column u, row v; integer pixel indices are
/// used directly with no half-pixel offset.
struct CameraIntrinsics {
  double fx = 60.0;
  double fy = 60.0;
  double cx = 31.5;
  double cy = 23.5;
  std::size_t width = 64;
  std::size_t height = 48;

  /// Throws std::invalid_argument when fx, fy are not positive or the
  /// principal point lies outside the image.
  void validate() const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Points in the camera frame (+X right, +Y down, +Z forward), meters.
struct PointCloud {
  DenseArray coords;                        // N x 3
  DenseArray feats;                         // N x C
  std::vector<std::int64_t> pixel_index;    // v * W + u, or -1

  std::size_t size() const { return coords.ndim() == 2 ? coords.dim(0) : 0; }
};

/// Positive pairs: pixel_rows[i] and point_rows[i] are the same 3D location.
struct CorrespondenceSet {
  std::vector<std::size_t> pixel_rows;
  std::vector<std::size_t> point_rows;

  std::size_t size() const { return point_rows.size(); }
};

/// Lifts every pixel with depth > 0 to X = (u - cx) d / fx, Y = (v - cy) d / fy,
/// Z = d. Points come out in row-major scan order; feats carry the pixel
/// values of `image` (any channel count).
PointCloud back_project(const DenseArray& image, const DenseArray& depth, const CameraIntrinsics& intr);

struct Projection {
  DenseArray pixels;         // N x 2, (u, v)
  std::vector<bool> valid;   // Z > 1e-9 and inside the image; invalid rows hold (0, 0)
};

Projection project(const DenseArray& coords, const CameraIntrinsics& intr);

/// Integer voxel key floor(coord / voxel_size) per axis.
struct VoxelKey {
  std::int64_t x, y, z;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

VoxelKey voxel_key(std::span<const double> xyz, double voxel_size);

/// Replaces each occupied voxel with the centroid and mean features of its
/// points. Output is sorted by voxel key; each output keeps the pixel_index of
/// the member nearest the centroid (ties go to the lowest pixel_index).
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size = 0.025);

/// Uniform sample without replacement over points with a known source pixel.
CorrespondenceSet sample_correspondences(const PointCloud& cloud, std::size_t count, Rng& rng);

}  // namespace ppkt
