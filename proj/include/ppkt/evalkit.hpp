#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppkt/models.hpp"
#include "ppkt/synthdata.hpp"

namespace ppkt {

// ---- retrieval ---------------------------------------------------------------------

/// Fraction of 3D anchors whose own pixel scores strictly higher than every
/// other pixel in the sample (ties count as misses).
double top1_accuracy(const DenseArray& z3d, const DenseArray& z2d);

struct RetrievalResult {
  double accuracy = 0.0;  // mean of per-frame accuracies
  std::size_t frames_used = 0;
  std::size_t frames_skipped = 0;
  std::size_t anchors = 0;
  std::size_t hits = 0;
};

/// `params` holds teacher, UPL, student and head. Frames with fewer than
/// `pairs` valid points are skipped with a warning on stderr.
RetrievalResult retrieval_top1(const std::vector<RgbdFrame>& frames, const ParamStore& params, const ModelConfig& model,
                               std::size_t pairs, Rng& rng);

/// Two-sided binomial interval [lo, hi] on the success count for n trials
/// with success probability p at the given confidence (exact tails).
std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double confidence);

// ---- linear probe ------------------------------------------------------------------

struct ProbeConfig {
  std::size_t steps = 300;
  double lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double labeled_fraction = 1.0;
  std::size_t points_per_frame = 256;
  std::uint64_t seed = 11;
  /// Train the backbone together with the classifier instead of freezing it.
  bool finetune = false;
};

struct ProbeReport {
  int class_count = 0;
  std::vector<double> class_acc;  // recall; NaN when excluded
  std::vector<double> class_iou;  // NaN when excluded
  std::vector<bool> in_train;
  std::vector<bool> in_heldout;
  std::vector<int> flagged;       // held-out classes never seen in training
  double mean_acc = 0.0;
  double mean_iou = 0.0;
  double overall_acc = 0.0;
  std::size_t train_points = 0;
  std::size_t heldout_points = 0;
  std::size_t train_frames = 0;
};

/// Labelled point features for a probe. Rows of `features` align with `labels`.
struct PointSet {
  DenseArray features;
  std::vector<int> labels;
};

/// Samples up to points_per_frame labelled points per frame and runs the
/// frozen backbone on them (with their voxel mates for context).
PointSet backbone_points(const std::vector<RgbdFrame>& frames, const ParamStore& params, const ModelConfig& model,
                         std::size_t points_per_frame, Rng& rng);

/// Trains a zero-initialised linear classifier on standardised features with
/// full-batch momentum SGD, then scores held-out points.
ProbeReport probe_features(const PointSet& train, const PointSet& heldout, int class_count, const ProbeConfig& cfg);

/// Complete probe: `params` must contain student/ weights (pretrained or
/// freshly initialised for the scratch baseline).
ProbeReport linear_probe(const std::vector<RgbdFrame>& train, const std::vector<RgbdFrame>& heldout,
                         const ParamStore& params, const ModelConfig& model, const ProbeConfig& cfg);

/// Frames kept for a labelled fraction: ceil(fraction * n) of them, chosen by
/// a seeded shuffle; at least one.
std::vector<std::size_t> labeled_subset(std::size_t n, double fraction, std::uint64_t seed);

// ---- feature diversity -------------------------------------------------------------

struct DiversityResult {
  double global_mean_cos = 0.0;
  double pixel_mean_cos = 0.0;
};

/// Mean pairwise cosine of (a) per-frame mean-pooled teacher maps and (b)
/// `sample_size` randomly drawn pixel embeddings. Pixel embeddings come from
/// the UPL when `params` has one, otherwise from the bilinearly upsampled
/// teacher map.
DiversityResult feature_diversity(const std::vector<RgbdFrame>& frames, const ParamStore& params,
                                  std::size_t sample_size, Rng& rng);

double mean_pairwise_cosine(const DenseArray& rows);

// ---- export ---------------------------------------------------------------------------

struct MetricsRow {
  std::string name;   // one of kMetricNames
  std::string split;  // "train" or "held-out"
  double value = 0.0;
  std::string context;
};

inline constexpr std::array<const char*, 9> kMetricNames{
    "retrieval_top1",  "probe_mean_acc", "probe_mean_iou", "probe_overall_acc", "probe_class_acc",
    "probe_class_iou", "global_mean_cos", "pixel_mean_cos", "grad_check_max_rel_error"};

inline constexpr const char* kMetricsRowsHeader = "name,split,value,context";

void export_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

void export_embeddings(const std::filesystem::path& path, const DenseArray& embeddings, std::span<const int> labels);

/// Parses a numeric CSV (header skipped); used to read embedding dumps back.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::string* header = nullptr);

std::vector<MetricsRow> probe_rows(const ProbeReport& report, const std::string& context);

}  // namespace ppkt
