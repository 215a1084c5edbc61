#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ppkt/dense_array.hpp"

namespace ppkt {

// Every differentiable op below comes with a *_backward that maps the
// gradient of a scalar w.r.t. the op's output to gradients w.r.t. its inputs.

/// Zero "same" padding of (k-1)/2, so the output is ceil(H/stride) x ceil(W/stride).
DenseArray conv2d(const DenseArray& input, const DenseArray& weights, const DenseArray& bias,
                  std::size_t stride);

struct Conv2dGrads {
  DenseArray input;
  DenseArray weights;
  DenseArray bias;
};

Conv2dGrads conv2d_backward(const DenseArray& input, const DenseArray& weights, std::size_t stride,
                            const DenseArray& grad_out);

/// Bilinear resize with half-pixel centres: s = (t + 0.5) * src / dst - 0.5,
/// clamped to [0, src - 1].
DenseArray bilinear_resize(const DenseArray& input, std::size_t out_h, std::size_t out_w);
DenseArray bilinear_resize_backward(const DenseArray& grad_out, std::size_t in_h, std::size_t in_w);

/// Divides each row by max(||row||, epsilon).
DenseArray l2_normalize_rows(const DenseArray& input, double epsilon = 1e-12);
DenseArray l2_normalize_rows_backward(const DenseArray& input, const DenseArray& grad_out,
                                      double epsilon = 1e-12);

/// a (n x k) * b (k x m).
DenseArray matmul(const DenseArray& a, const DenseArray& b);
/// a^T (k x n)^T * b (k x m) -> n x m.
DenseArray matmul_at_b(const DenseArray& a, const DenseArray& b);
/// a (n x k) * b^T (m x k)^T -> n x m.
DenseArray matmul_a_bt(const DenseArray& a, const DenseArray& b);

DenseArray transpose(const DenseArray& a);

/// x (N x in) * w (in x out) + b (out).
DenseArray linear(const DenseArray& x, const DenseArray& w, const DenseArray& b);

struct LinearGrads {
  DenseArray input;
  DenseArray weights;
  DenseArray bias;
};
LinearGrads linear_backward(const DenseArray& x, const DenseArray& w, const DenseArray& grad_out,
                            bool want_input_grad = true);

DenseArray relu(const DenseArray& x);
/// Masks grad_out by output > 0.
DenseArray relu_backward(const DenseArray& output, const DenseArray& grad_out);

DenseArray gather_rows(const DenseArray& x, std::span<const std::size_t> rows);
/// target[rows[i]] += src[i]
void scatter_add_rows(DenseArray& target, std::span<const std::size_t> rows, const DenseArray& src);

DenseArray concat_cols(const DenseArray& a, const DenseArray& b);
/// Splits an N x (ca + cb) array back into its two column blocks.
std::pair<DenseArray, DenseArray> split_cols(const DenseArray& x, std::size_t ca);

void add_inplace(DenseArray& target, const DenseArray& src, double scale = 1.0);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace ppkt
