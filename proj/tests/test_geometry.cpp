#include <doctest.h>

#include <map>
#include <tuple>
#include <unordered_map>

#include "ppkt/geometry.hpp"
#include "ppkt/synthdata.hpp"
#include "test_util.hpp"

using namespace ppkt;

namespace {

CameraIntrinsics identity_camera(std::size_t w, std::size_t h) {
  CameraIntrinsics c;
  c.fx = c.fy = 1.0;
  c.cx = c.cy = 0.0;
  c.width = w;
  c.height = h;
  return c;
}

PointCloud cloud_from(const std::vector<std::array<double, 3>>& pts) {
  PointCloud c;
  c.coords = DenseArray({pts.size(), 3});
  c.feats = DenseArray({pts.size(), 1});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) c.coords.at(i, k) = pts[i][k];
    c.feats.at(i, 0) = static_cast<double>(i);
    c.pixel_index.push_back(static_cast<std::int64_t>(i));
  }
  return c;
}

}  // namespace

TEST_SUITE("back_project") {
  TEST_CASE("identity intrinsics lift pixel (2, 3) at depth 1 to (2, 3, 1)") {
    const auto cam = identity_camera(4, 5);
    DenseArray depth({5, 4});
    depth.at(3, 2) = 1.0;
    DenseArray image({5, 4, 2});
    image.at(3, 2, 1) = 0.25;
    const PointCloud pc = back_project(image, depth, cam);
    REQUIRE(pc.size() == 1);
    CHECK(pc.coords.at(0, 0) == 2.0);
    CHECK(pc.coords.at(0, 1) == 3.0);
    CHECK(pc.coords.at(0, 2) == 1.0);
    CHECK(pc.feats.at(0, 1) == 0.25);
    CHECK(pc.pixel_index[0] == 3 * 4 + 2);
  }

  TEST_CASE("all-zero depth gives an empty cloud") {
    const auto cam = identity_camera(4, 5);
    CHECK(back_project(DenseArray({5, 4, 3}), DenseArray({5, 4}), cam).size() == 0);
  }

  TEST_CASE("bad depth and mismatched extents are rejected") {
    const auto cam = identity_camera(4, 5);
    DenseArray depth({5, 4});
    depth.at(0, 0) = -1.0;
    CHECK_THROWS(back_project(DenseArray({5, 4, 3}), depth, cam));
    depth.at(0, 0) = std::nan("");
    CHECK_THROWS(back_project(DenseArray({5, 4, 3}), depth, cam));
    CHECK_THROWS(back_project(DenseArray({5, 4, 3}), DenseArray({4, 4}), cam));
    CHECK_THROWS(back_project(DenseArray({5, 3, 3}), DenseArray({5, 4}), cam));
  }

  TEST_CASE("rendered frames round trip through project") {
    GenConfig g;
    g.scenes = 2;
    g.frames_per_scene = 3;
    const auto frames = generate_frames(g);
    for (const auto& f : frames) {
      const PointCloud pc = back_project(f.color, f.depth, f.intr);
      CHECK(pc.size() > 0);
      const Projection pr = project(pc.coords, f.intr);
      for (std::size_t i = 0; i < pc.size(); ++i) {
        REQUIRE(pr.valid[i]);
        const auto u = static_cast<double>(pc.pixel_index[i] % static_cast<std::int64_t>(f.intr.width));
        const auto v = static_cast<double>(pc.pixel_index[i] / static_cast<std::int64_t>(f.intr.width));
        CHECK(std::abs(pr.pixels.at(i, 0) - u) < 1e-6);
        CHECK(std::abs(pr.pixels.at(i, 1) - v) < 1e-6);
      }
    }
  }
}

TEST_SUITE("project") {
  TEST_CASE("inverse of the identity example, and degenerate depth") {
    const auto cam = identity_camera(4, 5);
    const DenseArray pts({3, 3}, std::vector<double>{2, 3, 1, 1, 1, 0, 50, 0, 1});
    const Projection pr = project(pts, cam);
    CHECK(pr.valid[0]);
    CHECK(pr.pixels.at(0, 0) == 2.0);
    CHECK(pr.pixels.at(0, 1) == 3.0);
    CHECK_FALSE(pr.valid[1]);
    CHECK_FALSE(pr.valid[2]);
  }
}

TEST_SUITE("voxel_downsample") {
  TEST_CASE("duplicates collapse to one point") {
    const PointCloud out = voxel_downsample(cloud_from({{0.3, 0.3, 0.3}, {0.3, 0.3, 0.3}}), 0.025);
    REQUIRE(out.size() == 1);
    CHECK(out.coords.at(0, 0) == 0.3);
    CHECK(out.feats.at(0, 0) == 0.5);
    CHECK(out.pixel_index[0] == 0);
  }

  TEST_CASE("two points in one cell average to their centroid") {
    const PointCloud out = voxel_downsample(cloud_from({{0.01, 0, 0}, {0.02, 0, 0}}), 0.025);
    REQUIRE(out.size() == 1);
    CHECK(out.coords.at(0, 0) == doctest::Approx(0.015).epsilon(1e-15));
    CHECK(out.coords.at(0, 1) == 0.0);
  }

  TEST_CASE("empty in, empty out") { CHECK(voxel_downsample(PointCloud{}, 0.1).size() == 0); }

  TEST_CASE("matches a hash-map reference on 10k random points") {
    Rng rng(3);
    std::vector<std::array<double, 3>> pts(10000);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    const PointCloud in = cloud_from(pts);
    const PointCloud out = voxel_downsample(in, 0.1);

    struct Acc {
      double x = 0, y = 0, z = 0, f = 0;
      std::size_t n = 0;
    };
    std::map<std::tuple<long, long, long>, Acc> ref;  // ordered by key like the output
    std::unordered_map<long, std::size_t> seen;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto k = std::make_tuple(static_cast<long>(std::floor(pts[i][0] / 0.1)),
                                     static_cast<long>(std::floor(pts[i][1] / 0.1)),
                                     static_cast<long>(std::floor(pts[i][2] / 0.1)));
      auto& a = ref[k];
      a.x += pts[i][0];
      a.y += pts[i][1];
      a.z += pts[i][2];
      a.f += static_cast<double>(i);
      ++a.n;
    }
    REQUIRE(out.size() == ref.size());
    std::size_t row = 0;
    for (const auto& [key, a] : ref) {
      const double n = static_cast<double>(a.n);
      CHECK(out.coords.at(row, 0) == a.x / n);
      CHECK(out.coords.at(row, 1) == a.y / n);
      CHECK(out.coords.at(row, 2) == a.z / n);
      CHECK(out.feats.at(row, 0) == a.f / n);
      ++row;
    }
  }

  TEST_CASE("representative pixel is the member nearest the centroid") {
    const PointCloud out = voxel_downsample(cloud_from({{0.00, 0, 0}, {0.05, 0, 0}, {0.09, 0, 0}}), 0.1);
    REQUIRE(out.size() == 1);
    CHECK(out.pixel_index[0] == 1);
  }
}

TEST_SUITE("sample_correspondences") {
  TEST_CASE("asking for every valid point returns each exactly once") {
    PointCloud c = cloud_from({{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 0, 1}});
    c.pixel_index[2] = -1;
    Rng rng(1);
    const CorrespondenceSet s = sample_correspondences(c, 3, rng);
    REQUIRE(s.size() == 3);
    std::vector<std::size_t> rows = s.point_rows;
    std::sort(rows.begin(), rows.end());
    CHECK(rows == std::vector<std::size_t>{0, 1, 3});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(s.pixel_rows[i] == static_cast<std::size_t>(c.pixel_index[s.point_rows[i]]));
    }
    try {
      sample_correspondences(c, 4, rng);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find('4') != std::string::npos);
      CHECK(msg.find('3') != std::string::npos);
    }
  }

  TEST_CASE("fixed seed repeats") {
    Rng r(2);
    std::vector<std::array<double, 3>> pts(500);
    for (auto& p : pts) p = {r.uniform(), r.uniform(), 1.0};
    const PointCloud c = cloud_from(pts);
    Rng a(7), b(7);
    CHECK(sample_correspondences(c, 100, a).point_rows == sample_correspondences(c, 100, b).point_rows);
  }

  TEST_CASE("selection frequencies are uniform within 5 sigma") {
    const std::size_t n = 10000, count = 256, reps = 1000;
    std::vector<std::array<double, 3>> pts(n, {0, 0, 1});
    const PointCloud c = cloud_from(pts);
    std::vector<int> hits(n, 0);
    Rng rng(5);
    for (std::size_t r = 0; r < reps; ++r) {
      const CorrespondenceSet s = sample_correspondences(c, count, rng);
      for (auto i : s.point_rows) ++hits[i];
    }
    const double p = static_cast<double>(count) / n;
    const double mean = reps * p, sigma = std::sqrt(reps * p * (1 - p));
    int worst = 0;
    for (int h : hits) worst = std::max(worst, static_cast<int>(std::abs(h - mean)));
    CHECK(worst < 5 * sigma);
  }
}
