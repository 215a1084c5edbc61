#include "ppkt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ppkt/ops.hpp"

namespace ppkt {
namespace {

void require_pairs(const DenseArray& a, const DenseArray& b, const char* what) {
  require_rank(a, 2, what);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": inputs differ in shape, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

// log-softmax of row / temp, stable.
void log_softmax(std::span<const double> row, double temp, std::span<double> out) {
  double mx = -INFINITY;
  for (double v : row) mx = std::max(mx, v / temp);
  double z = 0.0;
  for (double v : row) z += std::exp(v / temp - mx);
  const double lz = mx + std::log(z);
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] / temp - lz;
}

}  // namespace

LossOutput ppnce(const DenseArray& z3d, const DenseArray& z2d, double tau, bool want_grad) {
  require_pairs(z3d, z2d, "ppnce");
  const std::size_t m = z3d.dim(0);
  if (m == 0) throw std::invalid_argument("ppnce: need at least one pair");
  if (!(tau > 0)) throw std::invalid_argument("ppnce: tau must be positive");

  DenseArray logits = matmul_a_bt(z3d, z2d);
  for (double& v : logits.data()) v /= tau;

  LossOutput out;
  out.per_pair.resize(m);
  DenseArray grad_logits({m, m});
  std::vector<double> terms(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    for (std::size_t j = 0; j < m; ++j) terms[j] = std::exp(row[j] - mx);
    std::vector<double> sorted_terms = terms;
    const double denom = sorted_sum(std::move(sorted_terms));
    out.per_pair[i] = mx + std::log(denom) - row[i];
    if (want_grad) {
      auto g = grad_logits.row(i);
      for (std::size_t j = 0; j < m; ++j) g[j] = terms[j] / denom / tau;
      g[i] -= 1.0 / tau;
    }
  }
  out.value = sorted_sum(out.per_pair);
  if (want_grad) {
    out.grad_first = matmul(grad_logits, z2d);
    out.grad_second = matmul_at_b(grad_logits, z3d);
  }
  return out;
}

DenseArray ppnce_softmax(const DenseArray& z3d, const DenseArray& z2d, double tau) {
  require_pairs(z3d, z2d, "ppnce_softmax");
  if (!(tau > 0)) throw std::invalid_argument("ppnce_softmax: tau must be positive");
  DenseArray p = matmul_a_bt(z3d, z2d);
  for (std::size_t i = 0; i < p.dim(0); ++i) {
    auto row = p.row(i);
    log_softmax(row, tau, row);
    for (double& v : row) v = std::exp(v);
  }
  return p;
}

LossOutput ppkd(const DenseArray& teacher_logits, const DenseArray& student_logits, double kd_temp) {
  require_pairs(teacher_logits, student_logits, "ppkd");
  if (!(kd_temp > 0)) throw std::invalid_argument("ppkd: kd_temp must be positive");
  const std::size_t m = teacher_logits.dim(0), k = teacher_logits.dim(1);
  if (k < 2) throw std::invalid_argument("ppkd: need at least 2 classes");

  LossOutput out;
  out.per_pair.resize(m);
  out.grad_first = DenseArray({m, k});  // w.r.t. student logits
  std::vector<double> lt(k), ls(k);
  const double t2 = kd_temp * kd_temp;
  for (std::size_t i = 0; i < m; ++i) {
    log_softmax(teacher_logits.row(i), kd_temp, lt);
    log_softmax(student_logits.row(i), kd_temp, ls);
    double kl = 0.0;
    auto g = out.grad_first.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      const double pt = std::exp(lt[c]);
      kl += pt * (lt[c] - ls[c]);
      g[c] = kd_temp * (std::exp(ls[c]) - pt);
    }
    out.per_pair[i] = t2 * std::max(kl, 0.0);
  }
  out.value = std::accumulate(out.per_pair.begin(), out.per_pair.end(), 0.0);
  return out;
}

DenseArray mean_pool_normalize(const DenseArray& z) {
  require_rank(z, 2, "mean_pool_normalize");
  if (z.dim(0) == 0) throw std::invalid_argument("mean_pool_normalize: no rows");
  DenseArray mean({1, z.dim(1)});
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    const auto r = z.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) mean[j] += r[j];
  }
  for (double& v : mean.data()) v /= static_cast<double>(z.dim(0));
  return l2_normalize_rows(mean);
}

DenseArray mean_pool_normalize_backward(const DenseArray& z, const DenseArray& grad_pooled) {
  DenseArray mean({1, z.dim(1)});
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    const auto r = z.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) mean[j] += r[j];
  }
  const double inv = 1.0 / static_cast<double>(z.dim(0));
  for (double& v : mean.data()) v *= inv;
  const DenseArray gm = l2_normalize_rows_backward(mean, grad_pooled);
  DenseArray g(z.shape());
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    auto r = g.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = gm[j] * inv;
  }
  return g;
}

LossOutput global_l2(const DenseArray& z3d, const DenseArray& z2d) {
  require_rank(z3d, 2, "global_l2");
  require_rank(z2d, 2, "global_l2");
  if (z3d.dim(0) < 1 || z2d.dim(0) < 1) throw std::invalid_argument("global_l2: need at least one row");
  if (z3d.dim(1) != z2d.dim(1)) throw ShapeError("global_l2: embedding widths differ");
  const DenseArray a = mean_pool_normalize(z3d);
  const DenseArray b = mean_pool_normalize(z2d);
  LossOutput out;
  DenseArray gp({1, a.dim(1)});
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    out.value += d * d;
    gp[j] = 2.0 * d;
  }
  out.per_pair = {out.value};
  out.grad_first = mean_pool_normalize_backward(z3d, gp);
  return out;
}

LossOutput global_nce(const DenseArray& pooled3d, const DenseArray& pooled2d, double tau) {
  require_pairs(pooled3d, pooled2d, "global_nce");
  if (pooled3d.dim(0) < 2) throw std::invalid_argument("global_nce: need at least 2 frames for negatives");
  LossOutput out = ppnce(pooled3d, pooled2d, tau);
  out.grad_second = DenseArray();
  return out;
}

LossOutput cross_entropy(const DenseArray& logits, std::span<const int> labels, int ignore_label) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy: label count differs from logit rows");
  std::size_t used = 0;
  for (int l : labels) {
    if (l == ignore_label) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(l) + " outside 0.." + std::to_string(k - 1));
    }
    ++used;
  }
  if (used == 0) throw std::invalid_argument("cross_entropy: every label is ignored");

  LossOutput out;
  out.grad_first = DenseArray({n, k});
  std::vector<double> ls(k);
  const double inv = 1.0 / static_cast<double>(used);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == ignore_label) continue;
    log_softmax(logits.row(i), 1.0, ls);
    const auto c = static_cast<std::size_t>(labels[i]);
    out.per_pair.push_back(-ls[c]);
    auto g = out.grad_first.row(i);
    for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(ls[j]) * inv;
    g[c] -= inv;
  }
  out.value = std::accumulate(out.per_pair.begin(), out.per_pair.end(), 0.0) * inv;
  return out;
}

}  // namespace ppkt
