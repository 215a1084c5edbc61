#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppkt/trainer.hpp"

namespace ppkt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  if (v == "small") return ModelConfig::small_widths();
  if (v == "default") return ModelConfig{}.student_widths;
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_uint(key, item));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// shortest text that parses back to the same double
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ppnce: return "ppnce";
    case LossKind::ppkd: return "ppkd";
    case LossKind::global_l2: return "global_l2";
    case LossKind::global_nce: return "global_nce";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (auto k : {LossKind::ppnce, LossKind::ppkd, LossKind::global_l2, LossKind::global_nce}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown loss kind '" + name + "' (expected ppnce, ppkd, global_l2 or global_nce)");
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0)) throw std::invalid_argument("train config: lr0 must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("train config: momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
  if (batch_frames < 1) throw std::invalid_argument("train config: batch_frames must be >= 1");
  if (pairs_per_frame < 1) throw std::invalid_argument("train config: pairs_per_frame must be >= 1");
  if (!(lr_final_factor > 0 && lr_final_factor <= 1)) throw std::invalid_argument("train config: lr_final_factor must be in (0, 1]");
  if (!(grad_clip >= 0)) throw std::invalid_argument("train config: grad_clip must be >= 0");
  if (!(kd_temp > 0)) throw std::invalid_argument("train config: kd_temp must be positive");
  if (loss_kind == LossKind::global_nce && batch_frames < 2) {
    throw std::invalid_argument("train config: global_nce needs batch_frames >= 2");
  }
  model.validate();
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "lr0") cfg.lr0 = parse_double(key, v);
  else if (key == "momentum") cfg.momentum = parse_double(key, v);
  else if (key == "weight_decay") cfg.weight_decay = parse_double(key, v);
  else if (key == "steps") cfg.steps = parse_uint(key, v);
  else if (key == "batch_frames") cfg.batch_frames = parse_uint(key, v);
  else if (key == "pairs_per_frame") cfg.pairs_per_frame = parse_uint(key, v);
  else if (key == "lr_final_factor") cfg.lr_final_factor = parse_double(key, v);
  else if (key == "grad_clip") cfg.grad_clip = parse_double(key, v);
  else if (key == "loss_kind") cfg.loss_kind = parse_loss_kind(v);
  else if (key == "seed") cfg.seed = parse_uint(key, v);
  else if (key == "frozen") cfg.frozen = split_list(v);
  else if (key == "cross_frame") cfg.cross_frame = parse_bool(key, v);
  else if (key == "kd_temp") cfg.kd_temp = parse_double(key, v);
  else if (key == "embed_dim") cfg.model.embed_dim = parse_uint(key, v);
  else if (key == "tau") cfg.model.tau = parse_double(key, v);
  else if (key == "teacher_channels") cfg.model.teacher_channels = parse_widths(key, v);
  else if (key == "student_widths") cfg.model.student_widths = parse_widths(key, v);
  else if (key == "class_count") cfg.model.class_count = static_cast<int>(parse_uint(key, v));
  else if (key == "voxel_size") cfg.model.voxel_size = parse_double(key, v);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void load_config_file(const std::filesystem::path& path, TrainConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string config_text(const TrainConfig& cfg) {
  std::ostringstream out;
  std::string frozen;
  for (std::size_t i = 0; i < cfg.frozen.size(); ++i) frozen += (i ? "," : "") + cfg.frozen[i];
  out << "lr0=" << num(cfg.lr0) << '\n'
      << "momentum=" << num(cfg.momentum) << '\n'
      << "weight_decay=" << num(cfg.weight_decay) << '\n'
      << "steps=" << cfg.steps << '\n'
      << "batch_frames=" << cfg.batch_frames << '\n'
      << "pairs_per_frame=" << cfg.pairs_per_frame << '\n'
      << "lr_final_factor=" << num(cfg.lr_final_factor) << '\n'
      << "grad_clip=" << num(cfg.grad_clip) << '\n'
      << "loss_kind=" << to_string(cfg.loss_kind) << '\n'
      << "seed=" << cfg.seed << '\n'
      << "frozen=" << frozen << '\n'
      << "cross_frame=" << (cfg.cross_frame ? "true" : "false") << '\n'
      << "kd_temp=" << num(cfg.kd_temp) << '\n'
      << "embed_dim=" << cfg.model.embed_dim << '\n'
      << "tau=" << num(cfg.model.tau) << '\n'
      << "teacher_channels=" << join(cfg.model.teacher_channels) << '\n'
      << "student_widths=" << join(cfg.model.student_widths) << '\n'
      << "class_count=" << cfg.model.class_count << '\n'
      << "voxel_size=" << num(cfg.model.voxel_size) << '\n';
  return out.str();
}

}  // namespace ppkt
