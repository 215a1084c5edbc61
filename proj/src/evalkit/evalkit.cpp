#include "ppkt/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "ppkt/losses.hpp"
#include "ppkt/ops.hpp"
#include "ppkt/trainer.hpp"

namespace ppkt {

double top1_accuracy(const DenseArray& z3d, const DenseArray& z2d) {
  if (z3d.shape() != z2d.shape() || z3d.ndim() != 2) throw ShapeError("top1_accuracy: shapes differ");
  const std::size_t m = z3d.dim(0);
  if (m == 0) throw std::invalid_argument("top1_accuracy: no anchors");
  const DenseArray s = matmul_a_bt(z3d, z2d);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = s.row(i);
    bool first = true;
    for (std::size_t j = 0; j < m && first; ++j) {
      if (j != i && row[j] >= row[i]) first = false;
    }
    hits += first ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(m);
}

RetrievalResult retrieval_top1(const std::vector<RgbdFrame>& frames, const ParamStore& params, const ModelConfig& model,
                               std::size_t pairs, Rng& rng) {
  if (pairs < 2) throw std::invalid_argument("retrieval_top1: need at least 2 pairs per frame");
  RetrievalResult r;
  double acc_sum = 0.0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto valid = static_cast<std::size_t>(
        std::count_if(frames[f].labels.begin(), frames[f].labels.end(), [](int l) { return l >= 0; }));
    if (valid < pairs) {
      std::cerr << "warning: retrieval skips frame " << f << " (" << valid << " valid points < " << pairs << ")\n";
      ++r.frames_skipped;
      continue;
    }
    const FrameEmbeddings e = embed_frame(frames[f], params, model, pairs, rng);
    const double acc = top1_accuracy(e.z3d, e.z2d);
    acc_sum += acc;
    r.hits += static_cast<std::size_t>(std::lround(acc * static_cast<double>(pairs)));
    r.anchors += pairs;
    ++r.frames_used;
  }
  if (r.frames_used == 0) throw std::runtime_error("retrieval_top1: every frame was skipped");
  r.accuracy = acc_sum / static_cast<double>(r.frames_used);
  return r;
}

std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double confidence) {
  const double alpha = (1.0 - confidence) / 2.0;
  std::vector<double> pmf(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k), nn = static_cast<double>(n);
    pmf[k] = std::exp(std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) + kk * std::log(p) +
                      (nn - kk) * std::log1p(-p));
  }
  std::size_t lo = 0, hi = n;
  double cdf = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    cdf += pmf[k];
    if (cdf > alpha) {
      lo = k;
      break;
    }
  }
  cdf = 0.0;
  for (std::size_t k = n + 1; k-- > 0;) {
    cdf += pmf[k];
    if (cdf > alpha) {
      hi = k;
      break;
    }
  }
  return {lo, hi};
}

PointSet backbone_points(const std::vector<RgbdFrame>& frames, const ParamStore& params, const ModelConfig& model,
                         std::size_t points_per_frame, Rng& rng) {
  std::vector<double> feats;
  PointSet out;
  std::size_t width = 0;
  for (const auto& frame : frames) {
    const PointCloud cloud = student_input(back_project(frame.color, frame.depth, frame.intr));
    if (cloud.size() == 0) continue;
    const CorrespondenceSet pick = sample_correspondences(cloud, std::min(points_per_frame, cloud.size()), rng);
    const auto closure = voxel_closure(cloud, pick.point_rows, model.voxel_size);
    const DenseArray f = student_backbone(select_points(cloud, closure), params, model.voxel_size);
    width = f.dim(1);
    for (std::size_t i = 0; i < pick.size(); ++i) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(closure.begin(), closure.end(), pick.point_rows[i]) - closure.begin());
      const auto row = f.row(pos);
      feats.insert(feats.end(), row.begin(), row.end());
      const std::size_t pix = pick.pixel_rows[i];
      out.labels.push_back(frame.labels[pix]);
    }
  }
  out.features = DenseArray({out.labels.size(), width}, std::move(feats));
  return out;
}

ProbeReport probe_features(const PointSet& train, const PointSet& heldout, int class_count, const ProbeConfig& cfg) {
  if (train.labels.empty()) throw std::invalid_argument("linear_probe: no training points");
  if (heldout.labels.empty()) throw std::invalid_argument("linear_probe: no held-out points");
  const std::size_t c = train.features.dim(1);
  const auto k = static_cast<std::size_t>(class_count);

  // Per-channel standardisation with training statistics.
  std::vector<double> mu(c, 0.0), sd(c, 0.0);
  const std::size_t n = train.features.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) mu[j] += train.features.at(i, j);
  }
  for (double& v : mu) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) sd[j] += std::pow(train.features.at(i, j) - mu[j], 2);
  }
  for (double& v : sd) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
  auto standardise = [&](const DenseArray& x) {
    DenseArray y = x;
    for (std::size_t i = 0; i < y.dim(0); ++i) {
      for (std::size_t j = 0; j < c; ++j) y.at(i, j) = (y.at(i, j) - mu[j]) / sd[j];
    }
    return y;
  };
  const DenseArray xtr = standardise(train.features);
  const DenseArray xte = standardise(heldout.features);

  ParamStore probe;
  init_classifier(probe, kProbeNs, c, class_count, nullptr);
  VelocityState velocity;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const DenseArray logits = classifier_forward(xtr, probe, kProbeNs, class_count);
    const LossOutput ce = cross_entropy(logits, train.labels);
    classifier_backward(xtr, ce.grad_first, probe, kProbeNs);
    sgd_step(probe, cfg.lr, cfg.momentum, cfg.weight_decay, velocity);
  }

  ProbeReport r;
  r.class_count = class_count;
  r.train_points = n;
  r.heldout_points = heldout.labels.size();
  r.in_train.assign(k, false);
  r.in_heldout.assign(k, false);
  for (int l : train.labels) r.in_train[static_cast<std::size_t>(l)] = true;
  for (int l : heldout.labels) r.in_heldout[static_cast<std::size_t>(l)] = true;

  const DenseArray logits = classifier_forward(xte, probe, kProbeNs, class_count);
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto row = logits.row(i);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const auto truth = static_cast<std::size_t>(heldout.labels[i]);
    if (pred == truth) {
      ++tp[truth];
      ++correct;
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  r.overall_acc = static_cast<double>(correct) / static_cast<double>(logits.dim(0));
  r.class_acc.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.class_iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  std::size_t counted = 0;
  for (std::size_t cl = 0; cl < k; ++cl) {
    if (!r.in_heldout[cl]) continue;
    if (!r.in_train[cl]) {
      r.flagged.push_back(static_cast<int>(cl));
      continue;
    }
    r.class_acc[cl] = static_cast<double>(tp[cl]) / static_cast<double>(tp[cl] + fn[cl]);
    r.class_iou[cl] = static_cast<double>(tp[cl]) / static_cast<double>(tp[cl] + fp[cl] + fn[cl]);
    r.mean_acc += r.class_acc[cl];
    r.mean_iou += r.class_iou[cl];
    ++counted;
  }
  if (counted == 0) throw std::runtime_error("linear_probe: no held-out class was seen in training");
  r.mean_acc /= static_cast<double>(counted);
  r.mean_iou /= static_cast<double>(counted);
  return r;
}

std::vector<std::size_t> labeled_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("labeled fraction must be in (0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, 7);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  idx.resize(std::min(keep, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

// Full fine-tuning: backbone and classifier train together; features are
// standardised with statistics frozen at the start.
ProbeReport finetune_probe(const std::vector<RgbdFrame>& train, const std::vector<RgbdFrame>& heldout,
                           const ParamStore& params, const ModelConfig& model, const ProbeConfig& cfg) {
  struct Batch {
    PointCloud sub;
    std::vector<std::size_t> rows;
    std::vector<int> labels;
  };
  Rng rng(cfg.seed, 1);
  std::vector<Batch> batches;
  for (const auto& frame : train) {
    const PointCloud cloud = student_input(back_project(frame.color, frame.depth, frame.intr));
    if (cloud.size() == 0) continue;
    const CorrespondenceSet pick = sample_correspondences(cloud, std::min(cfg.points_per_frame, cloud.size()), rng);
    const auto closure = voxel_closure(cloud, pick.point_rows, model.voxel_size);
    Batch b{select_points(cloud, closure), {}, {}};
    for (std::size_t i = 0; i < pick.size(); ++i) {
      b.rows.push_back(static_cast<std::size_t>(
          std::lower_bound(closure.begin(), closure.end(), pick.point_rows[i]) - closure.begin()));
      b.labels.push_back(frame.labels[pick.pixel_rows[i]]);
    }
    batches.push_back(std::move(b));
  }
  if (batches.empty()) throw std::invalid_argument("linear_probe: no training points");

  ParamStore net;
  net.merge_from(params, kStudentNs);
  const std::size_t c = model.backbone_out();
  init_classifier(net, kProbeNs, c, model.class_count, nullptr);
  VelocityState velocity;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::size_t total = 0;
    for (const auto& b : batches) total += b.labels.size();
    for (const auto& b : batches) {
      BackboneTrace trace;
      const DenseArray f = student_backbone(b.sub, net, model.voxel_size, &trace);
      const DenseArray x = gather_rows(f, b.rows);
      const DenseArray logits = classifier_forward(x, net, kProbeNs, model.class_count);
      LossOutput ce = cross_entropy(logits, b.labels);
      // rescale the per-frame mean to a mean over all training points
      for (double& g : ce.grad_first.data()) g *= static_cast<double>(b.labels.size()) / static_cast<double>(total);
      const DenseArray gx = classifier_backward(x, ce.grad_first, net, kProbeNs);
      DenseArray gf({f.dim(0), f.dim(1)});
      scatter_add_rows(gf, b.rows, gx);
      student_backbone_backward(trace, gf, net);
    }
    sgd_step(net, cfg.lr, cfg.momentum, cfg.weight_decay, velocity);
  }

  // Score with the tuned backbone and classifier by reusing the frozen path
  // with zero further steps on top of the trained weights.
  Rng eval_rng(cfg.seed, 2);
  const PointSet te = backbone_points(heldout, net, model, cfg.points_per_frame, eval_rng);
  const DenseArray logits = classifier_forward(te.features, net, kProbeNs, model.class_count);
  const auto k = static_cast<std::size_t>(model.class_count);
  ProbeReport r;
  r.class_count = model.class_count;
  r.heldout_points = te.labels.size();
  r.in_train.assign(k, false);
  r.in_heldout.assign(k, false);
  for (const auto& b : batches) {
    for (int l : b.labels) r.in_train[static_cast<std::size_t>(l)] = true;
    r.train_points += b.labels.size();
  }
  for (int l : te.labels) r.in_heldout[static_cast<std::size_t>(l)] = true;
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto row = logits.row(i);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const auto truth = static_cast<std::size_t>(te.labels[i]);
    if (pred == truth) {
      ++tp[truth];
      ++correct;
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  r.overall_acc = static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, logits.dim(0)));
  r.class_acc.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.class_iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  std::size_t counted = 0;
  for (std::size_t cl = 0; cl < k; ++cl) {
    if (!r.in_heldout[cl]) continue;
    if (!r.in_train[cl]) {
      r.flagged.push_back(static_cast<int>(cl));
      continue;
    }
    r.class_acc[cl] = static_cast<double>(tp[cl]) / static_cast<double>(tp[cl] + fn[cl]);
    r.class_iou[cl] = static_cast<double>(tp[cl]) / static_cast<double>(tp[cl] + fp[cl] + fn[cl]);
    r.mean_acc += r.class_acc[cl];
    r.mean_iou += r.class_iou[cl];
    ++counted;
  }
  if (counted == 0) throw std::runtime_error("linear_probe: no held-out class was seen in training");
  r.mean_acc /= static_cast<double>(counted);
  r.mean_iou /= static_cast<double>(counted);
  return r;
}

}  // namespace

ProbeReport linear_probe(const std::vector<RgbdFrame>& train, const std::vector<RgbdFrame>& heldout,
                         const ParamStore& params, const ModelConfig& model, const ProbeConfig& cfg) {
  std::vector<RgbdFrame> subset;
  for (auto i : labeled_subset(train.size(), cfg.labeled_fraction, cfg.seed)) subset.push_back(train[i]);
  ProbeReport r;
  if (cfg.finetune) {
    r = finetune_probe(subset, heldout, params, model, cfg);
  } else {
    Rng train_rng(cfg.seed, 1), eval_rng(cfg.seed, 2);
    const PointSet tr = backbone_points(subset, params, model, cfg.points_per_frame, train_rng);
    const PointSet te = backbone_points(heldout, params, model, cfg.points_per_frame, eval_rng);
    r = probe_features(tr, te, model.class_count, cfg);
  }
  r.train_frames = subset.size();
  return r;
}

double mean_pairwise_cosine(const DenseArray& rows) {
  require_rank(rows, 2, "mean_pairwise_cosine");
  const std::size_t n = rows.dim(0);
  if (n < 2) throw std::invalid_argument("mean_pairwise_cosine: need at least two rows");
  const DenseArray unit = l2_normalize_rows(rows);
  const DenseArray g = matmul_a_bt(unit, unit);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s += g.at(i, j);
  }
  return s / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

DiversityResult feature_diversity(const std::vector<RgbdFrame>& frames, const ParamStore& params,
                                  std::size_t sample_size, Rng& rng) {
  if (frames.size() < 2) throw std::invalid_argument("feature_diversity: need at least two frames");
  if (sample_size < 2) throw std::invalid_argument("feature_diversity: need at least two pixel samples");
  const bool has_upl = params.contains(std::string(kUplNs) + "w");

  std::vector<DenseArray> pixel_maps;
  std::vector<double> global;
  std::size_t ct = 0;
  for (const auto& frame : frames) {
    const DenseArray map = teacher_forward(frame.color, params);
    ct = map.dim(2);
    const DenseArray pooled = mean_pool_normalize(map.reshaped({map.dim(0) * map.dim(1), ct}));
    global.insert(global.end(), pooled.values().begin(), pooled.values().end());
    const std::size_t h = frame.intr.height, w = frame.intr.width;
    DenseArray px = has_upl ? upl_forward(map, params, h, w) : bilinear_resize(map, h, w);
    px = px.reshaped({h * w, px.dim(2)});
    pixel_maps.push_back(has_upl ? std::move(px) : l2_normalize_rows(px));
  }

  const std::size_t c = pixel_maps.front().dim(1);
  DenseArray samples({sample_size, c});
  for (std::size_t s = 0; s < sample_size; ++s) {
    const std::size_t f = rng.below(frames.size());
    std::size_t pix = 0;
    // Prefer pixels that see geometry; fall back to any pixel.
    for (int attempt = 0; attempt < 64; ++attempt) {
      pix = rng.below(frames[f].labels.size());
      if (frames[f].labels[pix] >= 0) break;
    }
    const auto row = pixel_maps[f].row(pix);
    std::copy(row.begin(), row.end(), samples.row(s).begin());
  }
  return DiversityResult{mean_pairwise_cosine(DenseArray({frames.size(), ct}, std::move(global))),
                         mean_pairwise_cosine(samples)};
}

}  // namespace ppkt
