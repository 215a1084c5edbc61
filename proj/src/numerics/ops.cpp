#include "ppkt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace ppkt {
namespace {

void require_matrix(const DenseArray& a, const char* what) { require_rank(a, 2, what); }

// out = init + a * b for row-major a (n x k) and b (k x m); init is a row
// broadcast to every output row, or zero when null. Every output element sums
// its k products in order p = 0..k-1 with the same instruction shape whatever
// the tiling, so a row's result never depends on which rows share its tile.
using Lane8 = double __attribute__((vector_size(64)));

inline Lane8 load8(const double* p) {
  Lane8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Lane8 v) { std::memcpy(p, &v, sizeof v); }

// Products p0..p1-1 of an R x 16 output tile; the partial sums live in `out`
// between calls, so splitting k into chunks keeps the summation order.
template <std::size_t R>
void gemm_tile(const double* a, std::size_t si, std::size_t sp, const double* b, const double* init, double* out,
               std::size_t m, std::size_t j0, std::size_t p0, std::size_t p1) {
  Lane8 acc[R][2];
  const Lane8 zero{};
  for (std::size_t r = 0; r < R; ++r) {
    if (p0 > 0) {
      acc[r][0] = load8(out + r * m + j0);
      acc[r][1] = load8(out + r * m + j0 + 8);
    } else {
      acc[r][0] = init ? load8(init + j0) : zero;
      acc[r][1] = init ? load8(init + j0 + 8) : zero;
    }
  }
  for (std::size_t p = p0; p < p1; ++p) {
    const Lane8 b0 = load8(b + p * m + j0), b1 = load8(b + p * m + j0 + 8);
    for (std::size_t r = 0; r < R; ++r) {
      const double v = a[r * si + p * sp];
      acc[r][0] += v * b0;
      acc[r][1] += v * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    store8(out + r * m + j0, acc[r][0]);
    store8(out + r * m + j0 + 8, acc[r][1]);
  }
}

template <std::size_t R>
void gemm_block(const double* a, std::size_t si, std::size_t sp, const double* b, const double* init, double* out,
                std::size_t m, std::size_t p0, std::size_t p1) {
  for (std::size_t j0 = 0; j0 + 16 <= m; j0 += 16) gemm_tile<R>(a, si, sp, b, init, out, m, j0, p0, p1);
}

void gemm_full_tiles(const double* a, std::size_t si, std::size_t sp, const double* b, const double* init, double* out,
                     std::size_t n, std::size_t k, std::size_t m) {
  constexpr std::size_t kChunk = 128;  // rows of b kept hot in cache
  for (std::size_t p0 = 0; p0 < k || p0 == 0; p0 += kChunk) {
    const std::size_t p1 = std::min(k, p0 + kChunk);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) gemm_block<4>(a + i * si, si, sp, b, init, out + i * m, m, p0, p1);
    for (; i < n; ++i) gemm_block<1>(a + i * si, si, sp, b, init, out + i * m, m, p0, p1);
    if (p1 == k) break;
  }
}

// Element (i, p) of the left operand sits at a[i * si + p * sp].
void gemm_rows(const double* a, std::size_t si, std::size_t sp, const double* b, const double* init, double* out,
               std::size_t n, std::size_t k, std::size_t m) {
  gemm_full_tiles(a, si, sp, b, init, out, n, k, m);
  const std::size_t j0 = m / 16 * 16, rest = m - j0;
  if (rest == 0) return;
  // Leftover columns go through the same tiles, zero-padded to width 16.
  std::vector<double> bp(k * 16, 0.0), ip(16, 0.0), op(n * 16);
  for (std::size_t p = 0; p < k; ++p) std::copy_n(b + p * m + j0, rest, bp.begin() + static_cast<std::ptrdiff_t>(p * 16));
  if (init) std::copy_n(init + j0, rest, ip.begin());
  gemm_full_tiles(a, si, sp, bp.data(), init ? ip.data() : nullptr, op.data(), n, k, 16);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(op.begin() + static_cast<std::ptrdiff_t>(i * 16), rest, out + i * m + j0);
}

struct ResizeTap {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

std::vector<ResizeTap> resize_taps(std::size_t src, std::size_t dst) {
  std::vector<ResizeTap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t t = 0; t < dst; ++t) {
    double s = (static_cast<double>(t) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src - 1);
    taps[t] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

void check_conv_args(const DenseArray& input, const DenseArray& weights, std::size_t stride) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  const std::size_t k = weights.dim(0);
  if (weights.dim(1) != k || k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " + shape_str(weights.shape()));
  }
  if (weights.dim(2) != input.dim(2)) {
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(2)) + " channels but weights " +
                     shape_str(weights.shape()) + " expect " + std::to_string(weights.dim(2)));
  }
  if (input.dim(0) < k || input.dim(1) < k) {
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel " +
                     std::to_string(k) + "x" + std::to_string(k));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
}

}  // namespace

DenseArray conv2d(const DenseArray& input, const DenseArray& weights, const DenseArray& bias,
                  std::size_t stride) {
  check_conv_args(input, weights, stride);
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t k = weights.dim(0), cout = weights.dim(3);
  require_shape(bias, {cout}, "conv2d bias");
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;

  DenseArray out({oh, ow, cout});
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = &out.at(oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* px = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const double* wk = wt + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = px[ci];
            const double* wrow = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += v * wrow[co];
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const DenseArray& input, const DenseArray& weights, std::size_t stride,
                            const DenseArray& grad_out) {
  check_conv_args(input, weights, stride);
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t k = weights.dim(0), cout = weights.dim(3);
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  require_shape(grad_out, {oh, ow, cout}, "conv2d grad_out");

  Conv2dGrads g{DenseArray::zeros_like(input), DenseArray::zeros_like(weights), DenseArray({cout})};
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  double* gin = g.input.data().data();
  double* gw = g.weights.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* go = &grad_out.at(oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) g.bias[co] += go[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const std::size_t base = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const std::size_t wbase = (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = in[base + ci];
            const double* wrow = wt + wbase + ci * cout;
            double* gwrow = gw + wbase + ci * cout;
            double acc = 0.0;
            for (std::size_t co = 0; co < cout; ++co) {
              gwrow[co] += v * go[co];
              acc += wrow[co] * go[co];
            }
            gin[base + ci] += acc;
          }
        }
      }
    }
  }
  return g;
}

DenseArray bilinear_resize(const DenseArray& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 3, "bilinear_resize input");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: output extents must be positive");
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h == 0 || w == 0) throw ShapeError("bilinear_resize: input extents must be positive");
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  DenseArray out({out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = tx[x];
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
      const double* a = &input.at(y0, x0, 0);
      const double* b = &input.at(y0, x1, 0);
      const double* cc = &input.at(y1, x0, 0);
      const double* d = &input.at(y1, x1, 0);
      double* o = &out.at(y, x, 0);
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] = w00 * a[ch] + w01 * b[ch] + w10 * cc[ch] + w11 * d[ch];
    }
  }
  return out;
}

DenseArray bilinear_resize_backward(const DenseArray& grad_out, std::size_t in_h, std::size_t in_w) {
  require_rank(grad_out, 3, "bilinear_resize grad_out");
  if (in_h == 0 || in_w == 0) throw ShapeError("bilinear_resize: input extents must be positive");
  const std::size_t out_h = grad_out.dim(0), out_w = grad_out.dim(1), c = grad_out.dim(2);
  const auto ty = resize_taps(in_h, out_h);
  const auto tx = resize_taps(in_w, out_w);
  DenseArray g({in_h, in_w, c});
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = tx[x];
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
      const double* go = &grad_out.at(y, x, 0);
      double* a = &g.at(y0, x0, 0);
      double* b = &g.at(y0, x1, 0);
      double* cc = &g.at(y1, x0, 0);
      double* d = &g.at(y1, x1, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        a[ch] += w00 * go[ch];
        b[ch] += w01 * go[ch];
        cc[ch] += w10 * go[ch];
        d[ch] += w11 * go[ch];
      }
    }
  }
  return g;
}

DenseArray l2_normalize_rows(const DenseArray& input, double epsilon) {
  require_matrix(input, "l2_normalize_rows");
  if (!(epsilon > 0)) throw std::invalid_argument("l2_normalize_rows: epsilon must be positive");
  DenseArray out = input;
  for (std::size_t i = 0; i < out.dim(0); ++i) {
    auto r = out.row(i);
    const double inv = 1.0 / std::max(norm2(r), epsilon);
    for (double& v : r) v *= inv;
  }
  return out;
}

DenseArray l2_normalize_rows_backward(const DenseArray& input, const DenseArray& grad_out, double epsilon) {
  require_matrix(input, "l2_normalize_rows_backward");
  require_shape(grad_out, input.shape(), "l2_normalize_rows grad_out");
  DenseArray g(input.shape());
  for (std::size_t i = 0; i < input.dim(0); ++i) {
    const auto x = input.row(i);
    const auto go = grad_out.row(i);
    auto gi = g.row(i);
    const double n = norm2(x);
    if (n > epsilon) {
      // d(x/|x|) = (I - y y^T) / |x|
      const double inv = 1.0 / n;
      const double proj = dot(x, go) * inv * inv;
      for (std::size_t j = 0; j < x.size(); ++j) gi[j] = (go[j] - x[j] * proj) * inv;
    } else {
      for (std::size_t j = 0; j < x.size(); ++j) gi[j] = go[j] / epsilon;
    }
  }
  return g;
}

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  DenseArray out({n, m});
  gemm_rows(a.data().data(), k, 1, b.data().data(), nullptr, out.data().data(), n, k, m);
  return out;
}

DenseArray matmul_at_b(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "matmul_at_b lhs");
  require_matrix(b, "matmul_at_b rhs");
  const std::size_t k = a.dim(0), n = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul_at_b: " + shape_str(a.shape()) + "^T * " + shape_str(b.shape()));
  }
  DenseArray out({n, m});
  gemm_rows(a.data().data(), 1, n, b.data().data(), nullptr, out.data().data(), n, k, m);
  return out;
}

DenseArray matmul_a_bt(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "matmul_a_bt lhs");
  require_matrix(b, "matmul_a_bt rhs");
  if (b.dim(1) != a.dim(1)) {
    throw ShapeError("matmul_a_bt: " + shape_str(a.shape()) + " * " + shape_str(b.shape()) + "^T");
  }
  return matmul(a, transpose(b));
}

DenseArray transpose(const DenseArray& a) {
  require_matrix(a, "transpose");
  const std::size_t n = a.dim(0), m = a.dim(1);
  DenseArray out({m, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

DenseArray linear(const DenseArray& x, const DenseArray& w, const DenseArray& b) {
  require_matrix(w, "linear weights");
  if (x.ndim() != 2 || x.dim(1) != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weights " +
                     shape_str(w.shape()));
  }
  require_shape(b, {w.dim(1)}, "linear bias");
  DenseArray out({x.dim(0), w.dim(1)});
  gemm_rows(x.data().data(), w.dim(0), 1, w.data().data(), b.data().data(), out.data().data(), x.dim(0), w.dim(0), w.dim(1));
  return out;
}

LinearGrads linear_backward(const DenseArray& x, const DenseArray& w, const DenseArray& grad_out,
                            bool want_input_grad) {
  require_shape(grad_out, {x.dim(0), w.dim(1)}, "linear grad_out");
  LinearGrads g;
  g.weights = matmul_at_b(x, grad_out);
  g.bias = DenseArray({w.dim(1)});
  for (std::size_t i = 0; i < grad_out.dim(0); ++i) {
    const auto r = grad_out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
  }
  if (want_input_grad) g.input = matmul_a_bt(grad_out, w);
  return g;
}

DenseArray relu(const DenseArray& x) {
  DenseArray out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

DenseArray relu_backward(const DenseArray& output, const DenseArray& grad_out) {
  require_shape(grad_out, output.shape(), "relu grad_out");
  DenseArray g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

DenseArray gather_rows(const DenseArray& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  DenseArray out({rows.size(), x.dim(1)});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " of " +
                              std::to_string(x.dim(0)));
    }
    std::copy_n(x.row(rows[i]).begin(), x.dim(1), out.row(i).begin());
  }
  return out;
}

void scatter_add_rows(DenseArray& target, std::span<const std::size_t> rows, const DenseArray& src) {
  require_matrix(target, "scatter_add_rows target");
  require_shape(src, {rows.size(), target.dim(1)}, "scatter_add_rows source");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= target.dim(0)) throw std::out_of_range("scatter_add_rows: row out of range");
    auto t = target.row(rows[i]);
    const auto s = src.row(i);
    for (std::size_t j = 0; j < s.size(); ++j) t[j] += s[j];
  }
}

DenseArray concat_cols(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "concat_cols lhs");
  require_matrix(b, "concat_cols rhs");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t ca = a.dim(1), cb = b.dim(1);
  DenseArray out({a.dim(0), ca + cb});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    auto o = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), o.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), o.begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return out;
}

std::pair<DenseArray, DenseArray> split_cols(const DenseArray& x, std::size_t ca) {
  require_matrix(x, "split_cols");
  if (ca > x.dim(1)) throw ShapeError("split_cols: split point beyond " + shape_str(x.shape()));
  const std::size_t cb = x.dim(1) - ca;
  DenseArray a({x.dim(0), ca}), b({x.dim(0), cb});
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const auto r = x.row(i);
    std::copy_n(r.begin(), ca, a.row(i).begin());
    std::copy_n(r.begin() + static_cast<std::ptrdiff_t>(ca), cb, b.row(i).begin());
  }
  return {std::move(a), std::move(b)};
}

void add_inplace(DenseArray& target, const DenseArray& src, double scale) {
  require_shape(src, target.shape(), "add_inplace");
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += scale * src[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace ppkt
