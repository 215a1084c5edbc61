#include <doctest.h>

#include <fstream>
#include <set>

#include "ppkt/synthdata.hpp"
#include "test_util.hpp"

using namespace ppkt;
using ppkt::test::file_bytes;
using ppkt::test::TempDir;

namespace {

double dotv(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

GenConfig small_config(std::size_t scenes, std::size_t frames) {
  GenConfig g;
  g.scenes = scenes;
  g.frames_per_scene = frames;
  return g;
}

}  // namespace

TEST_SUITE("scene") {
  TEST_CASE("one box means floor plus that box") {
    Rng rng(1);
    const SceneSpec s = generate_scene(rng, 1);
    REQUIRE(s.boxes.size() == 2);
    CHECK(s.boxes[0].class_id == 0);
    CHECK(s.boxes[1].class_id >= 1);
  }

  TEST_CASE("same seed gives the same scene") {
    Rng a(5), b(5);
    CHECK(generate_scene(a, 6) == generate_scene(b, 6));
  }

  TEST_CASE("100 scenes keep every box inside the room and on the floor") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
      const SceneSpec s = generate_scene(rng, 1 + rng.below(8));
      for (const auto& b : s.boxes) {
        CHECK(s.bounds.contains(b.box));
        CHECK(b.class_id >= 0);
        CHECK(b.class_id < s.class_count);
      }
      for (std::size_t k = 1; k < s.boxes.size(); ++k) CHECK(s.boxes[k].box.min[1] == s.boxes[0].box.max[1]);
    }
  }

  TEST_CASE("camera basis is right-handed and orthonormal") {
    const CameraBasis b = camera_basis({{1, 1.5, -2}, {0, 0.5, 0}});
    CHECK(std::abs(dotv(b.right, b.down)) < 1e-12);
    CHECK(std::abs(dotv(b.right, b.forward)) < 1e-12);
    CHECK(std::abs(dotv(b.forward, b.forward) - 1) < 1e-12);
    CHECK(b.down[1] < 0);  // image down points roughly to world down
    CHECK_THROWS(camera_basis({{1, 1, 1}, {1, 1, 1}}));
  }

  TEST_CASE("camera poses stay clear of the boxes") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const SceneSpec s = generate_scene(rng, 5);
      const CameraPose p = sample_camera_pose(s, rng);
      CHECK(s.bounds.contains(p.position));
      for (const auto& b : s.boxes) CHECK_FALSE(b.box.contains(p.position));
    }
  }
}

TEST_SUITE("render") {
  TEST_CASE("face 2 m ahead has depth 2 at the centre pixel") {
    SceneSpec s;
    s.bounds = {{-10, -10, -10}, {10, 10, 10}};
    s.boxes.push_back({{{-1, -1, 2}, {1, 1, 3}}, {0.5, 0.5, 0.5}, 3});
    CameraIntrinsics intr;
    intr.width = 65;
    intr.height = 49;
    intr.cx = 32;
    intr.cy = 24;
    Rng rng(1);
    const RgbdFrame f = render_frame(s, {{0, 0, 0}, {0, 0, 1}}, intr, 0.0, rng);
    CHECK(std::abs(f.depth.at(24, 32) - 2.0) < 1e-9);
    CHECK(f.label(24, 32) == 3);
    CHECK(f.label(0, 0) == -1);
    CHECK(f.depth.at(0, 0) == 0.0);
    // head-on headlight: full brightness
    CHECK(f.color.at(24, 32, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("noise-free renders repeat bit for bit") {
    GenConfig g = small_config(2, 3);
    g.noise_sigma = 0.0;
    CHECK(generate_frames(g) == generate_frames(g));
    g.noise_sigma = 0.01;
    CHECK(generate_frames(g) == generate_frames(g));
  }

  TEST_CASE("valid pixels lie on the surface of a box with their label") {
    Rng rng(4);
    const CameraIntrinsics intr;
    std::size_t checked = 0;
    for (int i = 0; i < 6; ++i) {
      const SceneSpec s = generate_scene(rng, 6);
      const CameraPose pose = sample_camera_pose(s, rng);
      const RgbdFrame f = render_frame(s, pose, intr, 0.01, rng);
      const CameraBasis basis = camera_basis(pose);
      const PointCloud pc = back_project(f.color, f.depth, intr);
      for (std::size_t k = 0; k < pc.size(); ++k) {
        const Vec3 w = basis.to_world({pc.coords.at(k, 0), pc.coords.at(k, 1), pc.coords.at(k, 2)});
        const int label = f.labels[static_cast<std::size_t>(pc.pixel_index[k])];
        double best = 1e9;
        for (const auto& b : s.boxes) {
          if (b.class_id == label) best = std::min(best, b.box.surface_distance(w));
        }
        CHECK(best < 1e-4);
        ++checked;
      }
      for (double c : f.color.data()) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
      }
    }
    CHECK(checked > 1000);
  }

  TEST_CASE("generated frames have enough valid pixels and the right extents") {
    const auto frames = generate_frames(small_config(2, 4));
    CHECK(frames.size() == 8);
    for (const auto& f : frames) {
      CHECK(f.color.shape() == Shape{48, 64, 3});
      const auto valid = std::count_if(f.labels.begin(), f.labels.end(), [](int l) { return l >= 0; });
      CHECK(valid >= 512);
    }
  }
}

TEST_SUITE("frame files") {
  TEST_CASE("round trip keeps depth and labels bit-exact and colour quantised") {
    TempDir dir("frame_rt");
    const auto frames = generate_frames(small_config(1, 2));
    write_frame(dir / "a.ppkf", frames[0], 6);
    int k = 0;
    const RgbdFrame back = read_frame(dir / "a.ppkf", &k);
    CHECK(k == 6);
    CHECK(back.depth == frames[0].depth);
    CHECK(back.labels == frames[0].labels);
    CHECK(back.intr == frames[0].intr);
    CHECK(back.color == quantize_color(frames[0].color));
    // a read frame is already quantised, so it survives another trip unchanged
    write_frame(dir / "b.ppkf", back, 6);
    CHECK(read_frame(dir / "b.ppkf") == back);
    CHECK(file_bytes(dir / "a.ppkf") == file_bytes(dir / "b.ppkf"));
  }

  TEST_CASE("truncated or corrupt files are named in the error") {
    TempDir dir("frame_bad");
    const auto frames = generate_frames(small_config(1, 1));
    write_frame(dir / "f.ppkf", frames[0], 6);
    auto bytes = file_bytes(dir / "f.ppkf");
    {
      std::ofstream out(dir / "cut.ppkf", std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
      read_frame(dir / "cut.ppkf");
      FAIL("expected an error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("cut.ppkf") != std::string::npos);
    }
    bytes[0] = 'X';
    {
      std::ofstream out(dir / "magic.ppkf", std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_frame(dir / "magic.ppkf"), FormatError);
    CHECK_THROWS(read_frame(dir / "missing.ppkf"));
  }

  TEST_CASE("100-frame dataset: manifest matches the directory and checksums repeat") {
    TempDir a("ds_a"), b("ds_b");
    const auto frames = generate_frames(small_config(5, 20));
    write_dataset(a.path, frames, 6, 7);
    const Dataset d = read_dataset(a.path);
    CHECK(d.frames.size() == 100);
    CHECK(d.seed == 7);
    std::set<std::string> on_disk;
    for (const auto& e : std::filesystem::directory_iterator(a.path)) {
      if (e.path().extension() == ".ppkf") on_disk.insert(e.path().filename().string());
    }
    CHECK(on_disk == std::set<std::string>(d.files.begin(), d.files.end()));

    write_dataset(b.path, d.frames, d.class_count, d.seed);
    for (const auto& f : d.files) CHECK(fnv1a(file_bytes(a / f)) == fnv1a(file_bytes(b / f)));
    CHECK(file_bytes(a / kManifestName) == file_bytes(b / kManifestName));
  }
}
