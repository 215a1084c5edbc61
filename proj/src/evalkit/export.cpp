#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ppkt/evalkit.hpp"

namespace ppkt {

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

bool known_metric(const std::string& name) {
  for (const char* m : kMetricNames) {
    if (name == m) return true;
  }
  return false;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    // stod rejects "nan"/"inf" spellings on some platforms
    if (s == "nan" || s == "-nan") return std::nan("");
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

void export_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMetricsRowsHeader << '\n';
  for (const auto& r : rows) {
    if (!known_metric(r.name)) throw std::invalid_argument("unknown metric name: " + r.name);
    if (r.split != "train" && r.split != "held-out") throw std::invalid_argument("unknown split: " + r.split);
    out << r.name << ',' << r.split << ',' << format_value(r.value) << ',' << quote(r.context) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsRowsHeader) {
    throw std::runtime_error(path.string() + ": missing header '" + kMetricsRowsHeader + "'");
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != 4) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
    }
    rows.push_back({cells[0], cells[1], parse_double(cells[2], path, line_no), cells[3]});
  }
  return rows;
}

void export_embeddings(const std::filesystem::path& path, const DenseArray& embeddings, std::span<const int> labels) {
  require_rank(embeddings, 2, "export_embeddings");
  if (embeddings.dim(0) != labels.size()) throw ShapeError("export_embeddings: row and label counts differ");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t c = embeddings.dim(1);
  for (std::size_t j = 0; j < c; ++j) out << 'e' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out << format_value(embeddings.at(i, j)) << ',';
    out << labels[i] << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::string* header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_csv(line)) row.push_back(parse_double(cell, path, line_no));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<MetricsRow> probe_rows(const ProbeReport& report, const std::string& context) {
  std::vector<MetricsRow> rows{{"probe_mean_acc", "held-out", report.mean_acc, context},
                               {"probe_mean_iou", "held-out", report.mean_iou, context},
                               {"probe_overall_acc", "held-out", report.overall_acc, context}};
  for (std::size_t c = 0; c < report.class_acc.size(); ++c) {
    std::string ctx = context + ";class=" + std::to_string(c);
    if (std::find(report.flagged.begin(), report.flagged.end(), static_cast<int>(c)) != report.flagged.end()) {
      ctx += ";absent_from_train";
    }
    rows.push_back({"probe_class_acc", "held-out", report.class_acc[c], ctx});
    rows.push_back({"probe_class_iou", "held-out", report.class_iou[c], ctx});
  }
  return rows;
}

}  // namespace ppkt
