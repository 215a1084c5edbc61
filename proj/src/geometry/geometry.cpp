#include "ppkt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ppkt {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width == 0 || height == 0) throw std::invalid_argument("intrinsics: image extents must be positive");
  if (!(cx >= 0 && cx < static_cast<double>(width)) || !(cy >= 0 && cy < static_cast<double>(height))) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

PointCloud back_project(const DenseArray& image, const DenseArray& depth, const CameraIntrinsics& intr) {
  intr.validate();
  require_rank(depth, 2, "back_project depth");
  require_rank(image, 3, "back_project image");
  if (depth.dim(0) != intr.height || depth.dim(1) != intr.width || image.dim(0) != intr.height ||
      image.dim(1) != intr.width) {
    throw ShapeError("back_project: intrinsics are " + std::to_string(intr.width) + "x" +
                     std::to_string(intr.height) + " (WxH) but image is " + shape_str(image.shape()) +
                     " and depth is " + shape_str(depth.shape()));
  }
  const std::size_t h = intr.height, w = intr.width, c = image.dim(2);
  std::size_t n = 0;
  for (double d : depth.data()) {
    if (d < 0 || !std::isfinite(d)) throw std::invalid_argument("back_project: depth must be finite and >= 0");
    if (d > 0) ++n;
  }

  PointCloud cloud{DenseArray({n, 3}), DenseArray({n, c}), std::vector<std::int64_t>(n)};
  std::size_t i = 0;
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const double d = depth.at(v, u);
      if (!(d > 0)) continue;
      cloud.coords.at(i, 0) = (static_cast<double>(u) - intr.cx) * d / intr.fx;
      cloud.coords.at(i, 1) = (static_cast<double>(v) - intr.cy) * d / intr.fy;
      cloud.coords.at(i, 2) = d;
      for (std::size_t ch = 0; ch < c; ++ch) cloud.feats.at(i, ch) = image.at(v, u, ch);
      cloud.pixel_index[i] = static_cast<std::int64_t>(v * w + u);
      ++i;
    }
  }
  return cloud;
}

Projection project(const DenseArray& coords, const CameraIntrinsics& intr) {
  require_rank(coords, 2, "project coords");
  if (coords.dim(1) != 3) throw ShapeError("project: coords must be N x 3, got " + shape_str(coords.shape()));
  const std::size_t n = coords.dim(0);
  Projection p{DenseArray({n, 2}), std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = coords.at(i, 0), y = coords.at(i, 1), z = coords.at(i, 2);
    if (!(z > 1e-9)) continue;
    const double u = intr.fx * x / z + intr.cx;
    const double v = intr.fy * y / z + intr.cy;
    p.pixels.at(i, 0) = u;
    p.pixels.at(i, 1) = v;
    // pixel k covers [k - 0.5, k + 0.5)
    p.valid[i] = u >= -0.5 && u < static_cast<double>(intr.width) - 0.5 && v >= -0.5 &&
                 v < static_cast<double>(intr.height) - 0.5;
  }
  return p;
}

VoxelKey voxel_key(std::span<const double> xyz, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(xyz[0] / voxel_size)),
          static_cast<std::int64_t>(std::floor(xyz[1] / voxel_size)),
          static_cast<std::int64_t>(std::floor(xyz[2] / voxel_size))};
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0)) throw std::invalid_argument("voxel_downsample: voxel_size must be positive");
  const std::size_t n = cloud.size();
  const std::size_t c = cloud.feats.ndim() == 2 ? cloud.feats.dim(1) : 0;
  if (n == 0) return PointCloud{DenseArray({0, 3}), DenseArray({0, c}), {}};
  if (cloud.feats.dim(0) != n || cloud.pixel_index.size() != n) {
    throw ShapeError("voxel_downsample: coords, feats and pixel_index disagree on point count");
  }

  std::vector<VoxelKey> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = voxel_key(cloud.coords.row(i), voxel_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end) in order
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s + 1;
    while (e < n && keys[order[e]] == keys[order[s]]) ++e;
    groups.emplace_back(s, e);
    s = e;
  }

  PointCloud out{DenseArray({groups.size(), 3}), DenseArray({groups.size(), c}),
                 std::vector<std::int64_t>(groups.size())};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [s, e] = groups[g];
    const auto count = static_cast<double>(e - s);
    auto oc = out.coords.row(g);
    auto of = out.feats.row(g);
    for (std::size_t t = s; t < e; ++t) {
      const auto pc = cloud.coords.row(order[t]);
      const auto pf = cloud.feats.row(order[t]);
      for (std::size_t a = 0; a < 3; ++a) oc[a] += pc[a];
      for (std::size_t a = 0; a < c; ++a) of[a] += pf[a];
    }
    for (double& v : oc) v /= count;
    for (double& v : of) v /= count;

    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_pixel = -1;
    for (std::size_t t = s; t < e; ++t) {
      const auto pc = cloud.coords.row(order[t]);
      double d2 = 0;
      for (std::size_t a = 0; a < 3; ++a) d2 += (pc[a] - oc[a]) * (pc[a] - oc[a]);
      const std::int64_t pix = cloud.pixel_index[order[t]];
      if (d2 < best || (d2 == best && pix < best_pixel)) {
        best = d2;
        best_pixel = pix;
      }
    }
    out.pixel_index[g] = best_pixel;
  }
  return out;
}

CorrespondenceSet sample_correspondences(const PointCloud& cloud, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("sample_correspondences: count must be positive");
  std::vector<std::size_t> pool;
  pool.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.pixel_index.size(); ++i) {
    if (cloud.pixel_index[i] >= 0) pool.push_back(i);
  }
  if (pool.size() < count) {
    throw std::invalid_argument("sample_correspondences: requested " + std::to_string(count) +
                                " pairs but only " + std::to_string(pool.size()) +
                                " points have a source pixel");
  }
  // Partial Fisher-Yates: the first `count` slots are the sample, in draw order.
  CorrespondenceSet set;
  set.point_rows.reserve(count);
  set.pixel_rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    set.point_rows.push_back(pool[i]);
    set.pixel_rows.push_back(static_cast<std::size_t>(cloud.pixel_index[pool[i]]));
  }
  return set;
}

}  // namespace ppkt
