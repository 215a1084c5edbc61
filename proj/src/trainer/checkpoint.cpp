#include <bit>
#include <cstring>
#include <fstream>

#include "ppkt/trainer.hpp"

namespace ppkt {
namespace {

constexpr char kMagic[4] = {'P', 'P', 'K', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Cursor {
 public:
  Cursor(const std::vector<unsigned char>& b, const std::string& source) : b_(b), source_(source) {}
  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > b_.size()) {
      throw CheckpointError(source_ + ": truncated while reading " + what + " at byte offset " + std::to_string(pos_));
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    if (pos_ + n > b_.size()) {
      throw CheckpointError(source_ + ": truncated while reading " + what + " at byte offset " + std::to_string(pos_));
    }
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<unsigned char>& b_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ParamStore& params, std::uint64_t step) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    if (p.name.size() > 0xFFFF) throw CheckpointError("checkpoint: parameter name too long: " + p.name);
    if (p.value.ndim() > 0xFF) throw CheckpointError("checkpoint: too many dimensions in " + p.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.ndim()));
    for (auto d : p.value.shape()) put<std::uint64_t>(out, d);
    for (double v : p.value.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& source) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(source + ": not a checkpoint (bad magic)");
  }
  Cursor in(bytes, source);
  in.str(4, "magic");
  if (const auto version = in.get<std::uint32_t>("version"); version != kVersion) {
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kVersion) + ")");
  }
  Checkpoint ck;
  ck.step = in.get<std::uint64_t>("step");
  const auto count = in.get<std::uint32_t>("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = in.get<std::uint16_t>("name length");
    std::string name = in.str(len, "name");
    const auto ndim = in.get<std::uint8_t>("ndim");
    Shape shape(ndim);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = in.get<std::uint64_t>("dims");
      if (d > (std::size_t{1} << 32)) throw CheckpointError(source + ": implausible extent in '" + name + "'");
      total *= d;
    }
    if (total * 8 > bytes.size() - in.pos()) {
      throw CheckpointError(source + ": truncated data for '" + name + "' at byte offset " + std::to_string(in.pos()));
    }
    std::vector<double> data(total);
    for (double& v : data) v = std::bit_cast<double>(in.get<std::uint64_t>("data"));
    ck.params.add(std::move(name), DenseArray(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw CheckpointError(source + ": trailing bytes at offset " + std::to_string(in.pos()));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, std::uint64_t step) {
  const auto bytes = encode_checkpoint(params, step);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return decode_checkpoint(bytes, path.string());
}

std::uint64_t load_checkpoint_into(const std::filesystem::path& path, ParamStore& params) {
  Checkpoint ck = load_checkpoint(path);
  for (const auto& p : ck.params) {
    if (!params.contains(p.name)) {
      throw CheckpointError(path.string() + ": parameter '" + p.name + "' does not exist in the model");
    }
    Param& mine = params.get(p.name);
    if (mine.value.shape() != p.value.shape()) {
      throw CheckpointError(path.string() + ": parameter '" + p.name + "' has shape " + shape_str(p.value.shape()) +
                            " but the model expects " + shape_str(mine.value.shape()));
    }
    mine.value = p.value;
  }
  return ck.step;
}

}  // namespace ppkt
