#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ppkt/synthdata.hpp"

namespace ppkt {
namespace {

constexpr char kMagic[4] = {'P', 'P', 'K', 'F'};
constexpr std::uint32_t kVersion = 1;

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> buf, std::string name) : buf_(std::move(buf)), name_(std::move(name)) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError(name_ + ": truncated while reading " + what + " at byte offset " + std::to_string(pos_) +
                        " (file has " + std::to_string(buf_.size()) + " bytes)");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return buf_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const unsigned char* peek() const { return buf_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(name_ + ": " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  std::vector<unsigned char> buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::filesystem::path& path, const std::vector<unsigned char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::uint8_t to_u8(double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); }

}  // namespace

DenseArray quantize_color(const DenseArray& color) {
  DenseArray q = color;
  for (double& v : q.data()) v = static_cast<double>(to_u8(v)) / 255.0;
  return q;
}

void write_frame(const std::filesystem::path& path, const RgbdFrame& frame, int class_count) {
  const CameraIntrinsics& intr = frame.intr;
  const std::size_t h = intr.height, w = intr.width;
  require_shape(frame.color, {h, w, 3}, "write_frame color");
  require_shape(frame.depth, {h, w}, "write_frame depth");
  if (frame.labels.size() != h * w) throw ShapeError("write_frame: label count does not match the image");
  if (class_count < 1 || class_count > 127) throw std::invalid_argument("write_frame: class_count must fit in i8");

  ByteWriter out;
  out.bytes(kMagic, 4);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(w));
  out.u32(static_cast<std::uint32_t>(h));
  out.f32(static_cast<float>(intr.fx));
  out.f32(static_cast<float>(intr.fy));
  out.f32(static_cast<float>(intr.cx));
  out.f32(static_cast<float>(intr.cy));
  out.u32(static_cast<std::uint32_t>(class_count));
  for (double c : frame.color.data()) out.u8(to_u8(c));
  for (double d : frame.depth.data()) out.f32(static_cast<float>(d));
  for (int l : frame.labels) {
    if (l < -1 || l >= class_count) throw std::invalid_argument("write_frame: label " + std::to_string(l) + " out of range");
    out.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(l)));
  }
  spit(path, out.data());
}

RgbdFrame read_frame(const std::filesystem::path& path, int* class_count) {
  ByteReader in(slurp(path), path.string());
  in.need(4, "magic");
  if (std::memcmp(in.peek(), kMagic, 4) != 0) in.fail("bad magic (expected PPKF)", 0);
  in.skip(4);
  const std::size_t version_at = in.offset();
  if (const auto version = in.u32("version"); version != kVersion) {
    in.fail("unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t extent_at = in.offset();
  const std::uint32_t w = in.u32("width"), h = in.u32("height");
  if (w == 0 || h == 0 || w > 65536 || h > 65536) {
    in.fail("implausible extent " + std::to_string(w) + "x" + std::to_string(h), extent_at);
  }
  CameraIntrinsics intr;
  intr.width = w;
  intr.height = h;
  intr.fx = in.f32("fx");
  intr.fy = in.f32("fy");
  intr.cx = in.f32("cx");
  intr.cy = in.f32("cy");
  const std::size_t k_at = in.offset();
  const std::uint32_t k = in.u32("class count");
  if (k < 1 || k > 127) in.fail("class count " + std::to_string(k) + " out of range", k_at);
  if (class_count) *class_count = static_cast<int>(k);

  const std::size_t n = static_cast<std::size_t>(w) * h;
  in.need(n * 3 + n * 4 + n, "pixel payload");
  if (in.remaining() != n * 8) in.fail("trailing bytes after payload", in.offset() + n * 8);

  RgbdFrame frame{DenseArray({h, w, 3}), DenseArray({h, w}), std::vector<int>(n), intr};
  for (double& c : frame.color.data()) c = static_cast<double>(in.u8("color")) / 255.0;
  for (double& d : frame.depth.data()) {
    const std::size_t at = in.offset();
    d = in.f32("depth");
    if (!(d >= 0) || !std::isfinite(d)) in.fail("invalid depth value", at);
  }
  for (int& l : frame.labels) {
    const std::size_t at = in.offset();
    l = static_cast<std::int8_t>(in.u8("label"));
    if (l < -1 || l >= static_cast<int>(k)) in.fail("label " + std::to_string(l) + " out of range", at);
  }
  return frame;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<RgbdFrame>& frames, int class_count,
                   std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "count=" << frames.size() << " classes=" << class_count << " seed=" << seed << '\n';
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.ppkf", i);
    write_frame(dir / name, frames[i], class_count);
    manifest << name << '\n';
  }
  const std::string text = manifest.str();
  spit(dir / kManifestName, std::vector<unsigned char>(text.begin(), text.end()));
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open " + manifest_path.string());
  std::string header;
  std::getline(in, header);
  std::size_t count = 0;
  int classes = 0;
  unsigned long long seed = 0;
  if (std::sscanf(header.c_str(), "count=%zu classes=%d seed=%llu", &count, &classes, &seed) != 3) {
    throw FormatError(manifest_path.string() + ": malformed header line '" + header + "'");
  }
  Dataset ds;
  ds.class_count = classes;
  ds.seed = seed;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ds.files.push_back(line);
  }
  if (ds.files.size() != count) {
    throw FormatError(manifest_path.string() + ": header promises " + std::to_string(count) + " frames but lists " +
                      std::to_string(ds.files.size()));
  }
  ds.frames.reserve(count);
  for (const auto& f : ds.files) {
    int k = 0;
    ds.frames.push_back(read_frame(dir / f, &k));
    if (k != classes) {
      throw FormatError((dir / f).string() + ": class count " + std::to_string(k) + " disagrees with manifest");
    }
  }
  return ds;
}

}  // namespace ppkt
