#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppkt/grad_check.hpp"
#include "ppkt/models.hpp"
#include "ppkt/param_store.hpp"
#include "ppkt/synthdata.hpp"

namespace ppkt {

enum class LossKind { ppnce, ppkd, global_l2, global_nce };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  double lr0 = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t steps = 2000;
  std::size_t batch_frames = 8;
  std::size_t pairs_per_frame = 256;
  double lr_final_factor = 0.01;
  /// Gradients are rescaled to this global L2 norm when they exceed it; 0 disables.
  double grad_clip = 0.2;
  LossKind loss_kind = LossKind::ppnce;
  std::uint64_t seed = 3;
  std::vector<std::string> frozen{kTeacherNs};
  /// Pool negatives over every pair in the batch instead of within one frame.
  bool cross_frame = false;
  double kd_temp = 4.0;
  ModelConfig model;

  void validate() const;
};

/// Applies one `key=value` setting; unknown keys and malformed values throw.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Reads `key=value` lines ('#' starts a comment).
void load_config_file(const std::filesystem::path& path, TrainConfig& cfg);
std::string config_text(const TrainConfig& cfg);

// ---- optimisation ---------------------------------------------------------------

using VelocityState = std::map<std::string, DenseArray>;

/// v <- momentum v + g + weight_decay theta; theta <- theta - lr v. Frozen
/// parameters are skipped; every gradient is zeroed afterwards.
void sgd_step(ParamStore& params, double lr, double momentum, double weight_decay, VelocityState& velocity);

/// Rescales the trainable gradients so their joint L2 norm is at most
/// max_norm (no-op when max_norm is 0). Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

/// lr0 * lr_final_factor^(step / (steps - 1)); lr0 when steps == 1.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

// ---- checkpoints ------------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::uint64_t step = 0;
  ParamStore params;
};

std::vector<unsigned char> encode_checkpoint(const ParamStore& params, std::uint64_t step);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& source);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, std::uint64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads values into an existing store; every stored entry must exist in
/// `params` with the same shape. Returns the step counter.
std::uint64_t load_checkpoint_into(const std::filesystem::path& path, ParamStore& params);

// ---- training loops ----------------------------------------------------------------

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0;
  double loss_sum = 0;
  double loss_mean = 0;
  double pos_sim_mean = 0;
};

inline constexpr const char* kMetricsHeader = "step,lr,loss_sum,loss_mean,pos_sim_mean";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& rows);
std::string format_metrics_row(const StepMetrics& m);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ProgressFn = std::function<void(const StepMetrics&)>;

struct TrainResult {
  ParamStore params;
  std::vector<StepMetrics> metrics;
};

/// Cross-entropy pretraining of the 2D teacher on labels max-pooled to the
/// 1/8 feature grid. Only cfg's optimisation fields and model are used.
TrainResult pretrain_teacher(const std::vector<RgbdFrame>& frames, const TrainConfig& cfg,
                             const ProgressFn& progress = {});

/// Builds the full PPKT parameter set: the teacher's entries, then a freshly
/// initialised UPL, student, head (and kd_head for PPKD), seeded from cfg.seed.
ParamStore init_pretrain_params(const ParamStore& teacher, const TrainConfig& cfg);

/// Contrastive (or baseline-loss) pretraining of the 3D student.
TrainResult run_pretrain(const std::vector<RgbdFrame>& frames, const ParamStore& teacher, const TrainConfig& cfg,
                         const ProgressFn& progress = {});

/// Loss of one batch made of every frame in `frames`, with gradients
/// accumulated into `params`. Sampling draws from `rng`.
double pipeline_loss(const std::vector<RgbdFrame>& frames, ParamStore& params, const TrainConfig& cfg, Rng& rng,
                     StepMetrics* metrics = nullptr);

/// Freshly initialised UPL, student and head drawn exactly as
/// init_pretrain_params would draw them; the scratch baseline.
ParamStore init_student_params(const TrainConfig& cfg);

/// Widths, embedding size and class count read off the stored shapes; fields
/// the store does not determine keep their values from `base`.
ModelConfig infer_model(const ParamStore& params, ModelConfig base = {});

/// Finite-difference check of the whole pipeline (frozen random teacher,
/// trainable UPL, student and head) at tiny widths on generated frames.
GradCheckReport pipeline_grad_check(LossKind kind, std::uint64_t seed, std::size_t samples = 200, double step = 1e-5);

/// Per-frame embeddings used by the pretraining step, evaluation and tests.
struct FrameEmbeddings {
  CorrespondenceSet pairs;
  DenseArray z3d;  // M x C
  DenseArray z2d;  // M x C
};

FrameEmbeddings embed_frame(const RgbdFrame& frame, const ParamStore& params, const ModelConfig& model,
                            std::size_t pairs, Rng& rng);

/// Labels max-pooled over factor x factor blocks (-1 only where the whole block is -1).
std::vector<int> maxpool_labels(const RgbdFrame& frame, std::size_t factor);

}  // namespace ppkt
