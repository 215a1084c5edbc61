#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ppkt/dense_array.hpp"

namespace ppkt {

/// Value plus gradients w.r.t. the loss inputs. `grad_second` stays empty
/// for inputs that are treated as constants (a detached teacher side).
struct LossOutput {
  double value = 0.0;
  std::vector<double> per_pair;
  DenseArray grad_first;
  DenseArray grad_second;

  double mean() const { return per_pair.empty() ? value : value / static_cast<double>(per_pair.size()); }
};

/// Point-pixel NCE:
///   -sum_i log( exp(z3d_i . z2d_i / tau) / sum_j exp(z3d_i . z2d_j / tau) )
/// Anchors are 3D rows, the softmax runs over 2D rows. Row i of each input is
/// a positive pair. The value is permutation-invariant bit for bit: each
/// denominator and the final sum are accumulated in sorted order.
LossOutput ppnce(const DenseArray& z3d, const DenseArray& z2d, double tau, bool want_grad = true);

/// Row-wise softmax of z3d z2d^T / tau (the matrix ppnce normalises).
DenseArray ppnce_softmax(const DenseArray& z3d, const DenseArray& z2d, double tau);

/// kd_temp^2 * sum_i KL(softmax(t_i / T) || softmax(s_i / T)); gradient only
/// for the student logits.
LossOutput ppkd(const DenseArray& teacher_logits, const DenseArray& student_logits, double kd_temp = 4.0);

/// Squared distance between the normalised row means; gradient for z3d only.
LossOutput global_l2(const DenseArray& z3d, const DenseArray& z2d);

/// ppnce over per-frame pooled rows (B >= 2); gradient for the 3D side only.
LossOutput global_nce(const DenseArray& pooled3d, const DenseArray& pooled2d, double tau);

/// Mean negative log-softmax over rows whose label is not ignore_label.
LossOutput cross_entropy(const DenseArray& logits, std::span<const int> labels, int ignore_label = -1);

/// normalise(mean of rows) as a 1 x C array, and its backward.
DenseArray mean_pool_normalize(const DenseArray& z);
DenseArray mean_pool_normalize_backward(const DenseArray& z, const DenseArray& grad_pooled);

}  // namespace ppkt
