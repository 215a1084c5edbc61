#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>

#include "ppkt/losses.hpp"
#include "ppkt/ops.hpp"
#include "ppkt/trainer.hpp"

namespace ppkt {
namespace {

// Forward state of one frame within a training step.
struct FrameState {
  CorrespondenceSet pairs;
  PointCloud sub;                    // sampled points plus their voxel mates
  std::vector<std::size_t> sub_rows; // position of each sampled point in `sub`
  StudentTrace student;
  DenseArray z3d;
  TeacherTrace teacher;
  UplTrace upl;
  DenseArray z2d;
  std::size_t height = 0, width = 0;
};

struct FrameCache {
  std::optional<PointCloud> cloud;        // student input (xyz, rgb)
  std::optional<DenseArray> teacher_map;  // only while the teacher is frozen
  std::optional<DenseArray> pixel_logits; // (H*W) x K teacher logits, PPKD only
};

bool teacher_frozen(const ParamStore& params) {
  for (const auto& p : params) {
    if (p.name.starts_with(kTeacherNs) && p.trainable) return false;
  }
  return true;
}

const PointCloud& cached_cloud(FrameCache& cache, const RgbdFrame& frame) {
  if (!cache.cloud) cache.cloud = student_input(back_project(frame.color, frame.depth, frame.intr));
  return *cache.cloud;
}

void forward_frame(const RgbdFrame& frame, FrameCache& cache, const ParamStore& params, const ModelConfig& model,
                   std::size_t pair_count, Rng& rng, bool frozen_teacher, FrameState& st) {
  const PointCloud& cloud = cached_cloud(cache, frame);
  st.pairs = sample_correspondences(cloud, pair_count, rng);
  const auto closure = voxel_closure(cloud, st.pairs.point_rows, model.voxel_size);
  st.sub = select_points(cloud, closure);
  st.sub_rows.clear();
  for (auto r : st.pairs.point_rows) {
    st.sub_rows.push_back(static_cast<std::size_t>(std::lower_bound(closure.begin(), closure.end(), r) - closure.begin()));
  }
  const DenseArray z_sub = student_forward(st.sub, params, model.voxel_size, &st.student);
  st.z3d = gather_rows(z_sub, st.sub_rows);

  st.height = frame.intr.height;
  st.width = frame.intr.width;
  DenseArray map;
  if (frozen_teacher) {
    if (!cache.teacher_map) cache.teacher_map = teacher_forward(frame.color, params);
    map = *cache.teacher_map;
  } else {
    map = teacher_forward(frame.color, params, &st.teacher);
  }
  const DenseArray z2d_map = upl_forward(map, params, st.height, st.width, &st.upl);
  st.z2d = gather_rows(z2d_map.reshaped({st.height * st.width, z2d_map.dim(2)}), st.pairs.pixel_rows);
}

void backward_frame(FrameState& st, const DenseArray& g_z3d, const DenseArray* g_z2d, ParamStore& params,
                    bool frozen_teacher) {
  DenseArray g_sub({st.sub.size(), g_z3d.dim(1)});
  scatter_add_rows(g_sub, st.sub_rows, g_z3d);
  student_backward(st.student, g_sub, params);
  if (!g_z2d) return;
  const std::size_t c = g_z2d->dim(1);
  DenseArray g_map({st.height * st.width, c});
  scatter_add_rows(g_map, st.pairs.pixel_rows, *g_z2d);
  DenseArray g_teacher = upl_backward(st.upl, g_map.reshaped({st.height, st.width, c}), params);
  if (!frozen_teacher) teacher_backward(st.teacher, g_teacher, params);
}

DenseArray pixel_teacher_logits(FrameCache& cache, const RgbdFrame& frame, const ParamStore& params) {
  if (cache.pixel_logits) return *cache.pixel_logits;
  const DenseArray map = cache.teacher_map ? *cache.teacher_map : teacher_forward(frame.color, params);
  const DenseArray low = teacher_logits(map, params);
  const DenseArray up = bilinear_resize(low, frame.intr.height, frame.intr.width);
  DenseArray flat = up.reshaped({frame.intr.height * frame.intr.width, up.dim(2)});
  if (cache.teacher_map) cache.pixel_logits = flat;
  return flat;
}

DenseArray slice_rows(const DenseArray& x, std::size_t begin, std::size_t count) {
  DenseArray out({count, x.dim(1)});
  std::copy_n(x.row(begin).begin(), count * x.dim(1), out.data().begin());
  return out;
}

void check_finite(const StepMetrics& m, const std::optional<StepMetrics>& last) {
  if (std::isfinite(m.loss_sum)) return;
  std::string msg = "training diverged: non-finite loss at step " + std::to_string(m.step);
  if (last) msg += "; last finite metrics: " + format_metrics_row(*last);
  throw TrainingError(msg);
}

std::vector<const RgbdFrame*> checked_frames(const std::vector<RgbdFrame>& frames) {
  if (frames.empty()) throw std::invalid_argument("training needs a non-empty dataset");
  std::vector<const RgbdFrame*> out;
  for (const auto& f : frames) out.push_back(&f);
  return out;
}

// Forward, loss and backward for one batch; gradients accumulate into params.
void batch_loss(std::span<const RgbdFrame* const> batch, std::span<FrameCache* const> caches, ParamStore& params,
                const TrainConfig& cfg, Rng& rng, bool frozen, std::vector<FrameState>& states, StepMetrics& m) {
  const ModelConfig& model = cfg.model;
  const std::size_t b_count = batch.size();
  states.resize(b_count);
  std::size_t rows = 0;
  for (std::size_t b = 0; b < b_count; ++b) {
    forward_frame(*batch[b], *caches[b], params, model, cfg.pairs_per_frame, rng, frozen, states[b]);
    const auto& st = states[b];
    for (std::size_t i = 0; i < st.z3d.dim(0); ++i) m.pos_sim_mean += dot(st.z3d.row(i), st.z2d.row(i));
    rows += st.z3d.dim(0);
  }
  m.pos_sim_mean /= static_cast<double>(rows);

  switch (cfg.loss_kind) {
    case LossKind::ppnce: {
      if (cfg.cross_frame) {
        std::vector<double> a, c;
        for (const auto& st : states) {
          a.insert(a.end(), st.z3d.values().begin(), st.z3d.values().end());
          c.insert(c.end(), st.z2d.values().begin(), st.z2d.values().end());
        }
        const DenseArray all3({rows, model.embed_dim}, std::move(a));
        const DenseArray all2({rows, model.embed_dim}, std::move(c));
        const LossOutput loss = ppnce(all3, all2, model.tau);
        m.loss_sum = loss.value;
        std::size_t off = 0;
        for (std::size_t b = 0; b < b_count; ++b) {
          const std::size_t n = states[b].z3d.dim(0);
          const DenseArray g3 = slice_rows(loss.grad_first, off, n);
          const DenseArray g2 = slice_rows(loss.grad_second, off, n);
          backward_frame(states[b], g3, &g2, params, frozen);
          off += n;
        }
      } else {
        for (std::size_t b = 0; b < b_count; ++b) {
          const LossOutput loss = ppnce(states[b].z3d, states[b].z2d, model.tau);
          m.loss_sum += loss.value;
          backward_frame(states[b], loss.grad_first, &loss.grad_second, params, frozen);
        }
      }
      m.loss_mean = m.loss_sum / static_cast<double>(rows);
      break;
    }
    case LossKind::ppkd: {
      for (std::size_t b = 0; b < b_count; ++b) {
        FrameState& st = states[b];
        const DenseArray teacher_px =
            gather_rows(pixel_teacher_logits(*caches[b], *batch[b], params), st.pairs.pixel_rows);
        const DenseArray student_logits = classifier_forward(st.z3d, params, kKdHeadNs, model.class_count);
        const LossOutput loss = ppkd(teacher_px, student_logits, cfg.kd_temp);
        m.loss_sum += loss.value;
        const DenseArray g_z3d = classifier_backward(st.z3d, loss.grad_first, params, kKdHeadNs);
        backward_frame(st, g_z3d, nullptr, params, frozen);
      }
      m.loss_mean = m.loss_sum / static_cast<double>(rows);
      break;
    }
    case LossKind::global_l2: {
      for (std::size_t b = 0; b < b_count; ++b) {
        const LossOutput loss = global_l2(states[b].z3d, states[b].z2d);
        m.loss_sum += loss.value;
        backward_frame(states[b], loss.grad_first, nullptr, params, frozen);
      }
      m.loss_mean = m.loss_sum / static_cast<double>(b_count);
      break;
    }
    case LossKind::global_nce: {
      const std::size_t c = model.embed_dim;
      DenseArray p3({b_count, c}), p2({b_count, c});
      for (std::size_t b = 0; b < b_count; ++b) {
        const DenseArray a = mean_pool_normalize(states[b].z3d);
        const DenseArray t = mean_pool_normalize(states[b].z2d);
        std::copy(a.data().begin(), a.data().end(), p3.row(b).begin());
        std::copy(t.data().begin(), t.data().end(), p2.row(b).begin());
      }
      const LossOutput loss = global_nce(p3, p2, model.tau);
      m.loss_sum = loss.value;
      for (std::size_t b = 0; b < b_count; ++b) {
        const DenseArray g = mean_pool_normalize_backward(states[b].z3d, slice_rows(loss.grad_first, b, 1));
        backward_frame(states[b], g, nullptr, params, frozen);
      }
      m.loss_mean = m.loss_sum / static_cast<double>(b_count);
      break;
    }
  }
}

}  // namespace

std::string format_metrics_row(const StepMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", m.step, m.lr, m.loss_sum, m.loss_mean, m.pos_sim_mean);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<int> maxpool_labels(const RgbdFrame& frame, std::size_t factor) {
  const std::size_t h = frame.intr.height, w = frame.intr.width;
  const std::size_t oh = (h + factor - 1) / factor, ow = (w + factor - 1) / factor;
  std::vector<int> out(oh * ow, -1);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      int& cell = out[(v / factor) * ow + u / factor];
      cell = std::max(cell, frame.label(v, u));
    }
  }
  return out;
}

TrainResult pretrain_teacher(const std::vector<RgbdFrame>& frames, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const auto pool = checked_frames(frames);
  TrainResult result;
  Rng init_rng(cfg.seed, 1);
  init_teacher(result.params, cfg.model, init_rng);
  Rng batch_rng(cfg.seed, 2);
  VelocityState velocity;
  std::optional<StepMetrics> last;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StepMetrics m{step, lr_schedule(step, cfg), 0.0, 0.0, 0.0};
    std::size_t frames_used = 0;
    for (std::size_t b = 0; b < cfg.batch_frames; ++b) {
      const RgbdFrame& frame = *pool[batch_rng.below(pool.size())];
      const std::vector<int> labels = maxpool_labels(frame, 8);
      if (std::all_of(labels.begin(), labels.end(), [](int l) { return l < 0; })) continue;
      TeacherTrace trace;
      const DenseArray map = teacher_forward(frame.color, result.params, &trace);
      const DenseArray logits = teacher_logits(map, result.params);
      const std::size_t k = logits.dim(2);
      const LossOutput ce = cross_entropy(logits.reshaped({logits.dim(0) * logits.dim(1), k}), labels);
      DenseArray g_map;
      teacher_logits_backward(map, ce.grad_first.reshaped(logits.shape()), result.params, &g_map);
      teacher_backward(trace, g_map, result.params);
      m.loss_sum += ce.value;
      ++frames_used;
    }
    m.loss_mean = frames_used ? m.loss_sum / static_cast<double>(frames_used) : 0.0;
    check_finite(m, last);
    clip_grad_norm(result.params, cfg.grad_clip);
    sgd_step(result.params, m.lr, cfg.momentum, cfg.weight_decay, velocity);
    result.metrics.push_back(m);
    last = m;
    if (progress) progress(m);
  }
  return result;
}

ParamStore init_pretrain_params(const ParamStore& teacher, const TrainConfig& cfg) {
  cfg.validate();
  ParamStore params;
  params.merge_from(teacher, kTeacherNs);
  if (!params.contains(std::string(kTeacherNs) + "conv1/w")) {
    throw std::invalid_argument("teacher parameters missing from the supplied store");
  }
  const auto& last_w = params.value(std::string(kTeacherNs) + "conv3/w");
  if (last_w.dim(3) != cfg.model.teacher_out()) {
    throw ShapeError("teacher outputs " + std::to_string(last_w.dim(3)) + " channels but the model config expects " +
                     std::to_string(cfg.model.teacher_out()));
  }
  Rng init_rng(cfg.seed, 1);
  init_upl(params, cfg.model, init_rng);
  init_student(params, cfg.model, init_rng);
  if (cfg.loss_kind == LossKind::ppkd) {
    init_classifier(params, kKdHeadNs, cfg.model.embed_dim, cfg.model.class_count, &init_rng);
  }
  for (auto& p : params) p.trainable = true;
  for (const auto& ns : cfg.frozen) params.set_trainable(ns, false);
  // Only PPNCE sends gradient through the pixel side.
  if (cfg.loss_kind != LossKind::ppnce) params.set_trainable(kUplNs, false);
  return params;
}

FrameEmbeddings embed_frame(const RgbdFrame& frame, const ParamStore& params, const ModelConfig& model,
                            std::size_t pairs, Rng& rng) {
  FrameCache cache;
  FrameState st;
  forward_frame(frame, cache, params, model, pairs, rng, true, st);
  return FrameEmbeddings{std::move(st.pairs), std::move(st.z3d), std::move(st.z2d)};
}

TrainResult run_pretrain(const std::vector<RgbdFrame>& frames, const ParamStore& teacher, const TrainConfig& cfg,
                         const ProgressFn& progress) {
  const auto pool = checked_frames(frames);
  TrainResult result;
  result.params = init_pretrain_params(teacher, cfg);
  ParamStore& params = result.params;
  const bool frozen = teacher_frozen(params);

  std::vector<FrameCache> caches(pool.size());
  Rng batch_rng(cfg.seed, 2);
  VelocityState velocity;
  std::optional<StepMetrics> last;
  std::vector<FrameState> states;
  std::vector<const RgbdFrame*> batch(cfg.batch_frames);
  std::vector<FrameCache*> batch_caches(cfg.batch_frames);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StepMetrics m{step, lr_schedule(step, cfg), 0.0, 0.0, 0.0};
    for (std::size_t b = 0; b < cfg.batch_frames; ++b) {
      const std::size_t pick = batch_rng.below(pool.size());
      batch[b] = pool[pick];
      batch_caches[b] = &caches[pick];
    }
    batch_loss(batch, batch_caches, params, cfg, batch_rng, frozen, states, m);

    check_finite(m, last);
    clip_grad_norm(params, cfg.grad_clip);
    sgd_step(params, m.lr, cfg.momentum, cfg.weight_decay, velocity);
    result.metrics.push_back(m);
    last = m;
    if (progress) progress(m);
  }
  return result;
}

double pipeline_loss(const std::vector<RgbdFrame>& frames, ParamStore& params, const TrainConfig& cfg, Rng& rng,
                     StepMetrics* metrics) {
  const auto batch = checked_frames(frames);
  std::vector<FrameCache> caches(batch.size());
  std::vector<FrameCache*> cache_ptrs;
  for (auto& c : caches) cache_ptrs.push_back(&c);
  std::vector<FrameState> states;
  StepMetrics m;
  batch_loss(batch, cache_ptrs, params, cfg, rng, teacher_frozen(params), states, m);
  if (metrics) *metrics = m;
  return m.loss_sum;
}

}  // namespace ppkt
