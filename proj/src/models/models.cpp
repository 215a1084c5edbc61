#include "ppkt/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ppkt/ops.hpp"

namespace ppkt {
namespace {

std::string stage_name(std::size_t i) { return std::string(kTeacherNs) + "conv" + std::to_string(i + 1) + "/"; }

void accumulate(ParamStore& params, const std::string& name, const DenseArray& g) {
  add_inplace(params.grad(name), g);
}

const std::array<const char*, 3> kBackboneLayers{"fc1", "fc2", "ctx"};

std::string backbone_name(std::size_t i) { return std::string(kStudentNs) + kBackboneLayers[i] + "/"; }

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim < 2) throw std::invalid_argument("model config: embed_dim must be >= 2");
  if (!(tau > 0)) throw std::invalid_argument("model config: tau must be positive");
  if (teacher_channels.size() != 3) throw std::invalid_argument("model config: teacher needs exactly 3 stage widths");
  if (student_widths.size() != 2) throw std::invalid_argument("model config: student needs exactly 2 widths");
  for (auto w : teacher_channels) {
    if (w < 1) throw std::invalid_argument("model config: widths must be >= 1");
  }
  for (auto w : student_widths) {
    if (w < 1) throw std::invalid_argument("model config: widths must be >= 1");
  }
  if (class_count < 2) throw std::invalid_argument("model config: class_count must be >= 2");
  if (!(voxel_size > 0)) throw std::invalid_argument("model config: voxel_size must be positive");
}

DenseArray glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseArray a(std::move(shape));
  for (double& v : a.data()) v = rng.uniform(-limit, limit);
  return a;
}

void init_teacher(ParamStore& params, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  std::size_t cin = 3;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t cout = cfg.teacher_channels[i];
    params.add(stage_name(i) + "w", glorot_uniform({3, 3, cin, cout}, 9 * cin, 9 * cout, rng));
    params.add(stage_name(i) + "b", DenseArray({cout}));
    cin = cout;
  }
  const auto k = static_cast<std::size_t>(cfg.class_count);
  params.add(std::string(kTeacherNs) + "cls/w", glorot_uniform({1, 1, cin, k}, cin, k, rng));
  params.add(std::string(kTeacherNs) + "cls/b", DenseArray({k}));
}

void init_upl(ParamStore& params, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t ct = cfg.teacher_out(), c = cfg.embed_dim;
  params.add(std::string(kUplNs) + "w", glorot_uniform({1, 1, ct, c}, ct, c, rng));
  params.add(std::string(kUplNs) + "b", DenseArray({c}));
}

void init_student(ParamStore& params, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t w1 = cfg.student_widths[0], w2 = cfg.student_widths[1];
  const std::array<std::pair<std::size_t, std::size_t>, 3> dims{{{6, w1}, {w1, w2}, {2 * w2, w2}}};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto [in, out] = dims[i];
    params.add(backbone_name(i) + "w", glorot_uniform({in, out}, in, out, rng));
    params.add(backbone_name(i) + "b", DenseArray({out}));
  }
  params.add(std::string(kHeadNs) + "w", glorot_uniform({w2, cfg.embed_dim}, w2, cfg.embed_dim, rng));
  params.add(std::string(kHeadNs) + "b", DenseArray({cfg.embed_dim}));
}

void init_classifier(ParamStore& params, const std::string& prefix, std::size_t in_dim, int class_count, Rng* rng) {
  if (class_count < 1) throw std::invalid_argument("init_classifier: class_count must be positive");
  const auto k = static_cast<std::size_t>(class_count);
  params.add(prefix + "w", rng ? glorot_uniform({in_dim, k}, in_dim, k, *rng) : DenseArray({in_dim, k}));
  params.add(prefix + "b", DenseArray({k}));
}

// ---- teacher -------------------------------------------------------------------

DenseArray teacher_forward(const DenseArray& color, const ParamStore& params, TeacherTrace* trace) {
  require_rank(color, 3, "teacher_forward input");
  if (color.dim(0) % 8 != 0 || color.dim(1) % 8 != 0) {
    throw ShapeError("teacher_forward: image extents " + shape_str(color.shape()) + " must be divisible by 8");
  }
  DenseArray x = color;
  if (trace) {
    trace->input = color;
    trace->activations.clear();
  }
  for (std::size_t i = 0; i < 3; ++i) {
    x = relu(conv2d(x, params.value(stage_name(i) + "w"), params.value(stage_name(i) + "b"), 2));
    if (trace) trace->activations.push_back(x);
  }
  return x;
}

void teacher_backward(const TeacherTrace& trace, const DenseArray& grad_out, ParamStore& params) {
  DenseArray g = grad_out;
  for (std::size_t s = 3; s-- > 0;) {
    g = relu_backward(trace.activations[s], g);
    const DenseArray& in = s == 0 ? trace.input : trace.activations[s - 1];
    Conv2dGrads cg = conv2d_backward(in, params.value(stage_name(s) + "w"), 2, g);
    accumulate(params, stage_name(s) + "w", cg.weights);
    accumulate(params, stage_name(s) + "b", cg.bias);
    g = std::move(cg.input);
  }
}

DenseArray teacher_logits(const DenseArray& feature_map, const ParamStore& params) {
  return conv2d(feature_map, params.value(std::string(kTeacherNs) + "cls/w"),
                params.value(std::string(kTeacherNs) + "cls/b"), 1);
}

void teacher_logits_backward(const DenseArray& feature_map, const DenseArray& grad_logits, ParamStore& params,
                             DenseArray* grad_feature_map) {
  const std::string w = std::string(kTeacherNs) + "cls/w";
  Conv2dGrads cg = conv2d_backward(feature_map, params.value(w), 1, grad_logits);
  accumulate(params, w, cg.weights);
  accumulate(params, std::string(kTeacherNs) + "cls/b", cg.bias);
  if (grad_feature_map) *grad_feature_map = std::move(cg.input);
}

// ---- UPL -----------------------------------------------------------------------

DenseArray upl_forward(const DenseArray& feature_map, const ParamStore& params, std::size_t out_h,
                       std::size_t out_w, UplTrace* trace) {
  require_rank(feature_map, 3, "upl_forward feature map");
  const DenseArray& w = params.value(std::string(kUplNs) + "w");
  if (w.dim(2) != feature_map.dim(2)) {
    throw ShapeError("upl_forward: feature map has " + std::to_string(feature_map.dim(2)) +
                     " channels, projection expects " + std::to_string(w.dim(2)));
  }
  const std::size_t c = w.dim(3);
  DenseArray projected = conv2d(feature_map, w, params.value(std::string(kUplNs) + "b"), 1);
  DenseArray up = bilinear_resize(projected, out_h, out_w).reshaped({out_h * out_w, c});
  DenseArray out = l2_normalize_rows(up).reshaped({out_h, out_w, c});
  if (trace) {
    trace->feature_map = feature_map;
    trace->proj_h = projected.dim(0);
    trace->proj_w = projected.dim(1);
    trace->upsampled = std::move(up);
  }
  return out;
}

DenseArray upl_backward(const UplTrace& trace, const DenseArray& grad_out, ParamStore& params) {
  const std::size_t out_h = grad_out.dim(0), out_w = grad_out.dim(1), c = grad_out.dim(2);
  DenseArray g = l2_normalize_rows_backward(trace.upsampled, grad_out.reshaped({out_h * out_w, c}));
  DenseArray gp = bilinear_resize_backward(g.reshaped({out_h, out_w, c}), trace.proj_h, trace.proj_w);
  const std::string w = std::string(kUplNs) + "w";
  Conv2dGrads cg = conv2d_backward(trace.feature_map, params.value(w), 1, gp);
  accumulate(params, w, cg.weights);
  accumulate(params, std::string(kUplNs) + "b", cg.bias);
  return std::move(cg.input);
}

// ---- student -------------------------------------------------------------------

PointCloud student_input(const PointCloud& rgb_cloud) {
  if (rgb_cloud.feats.ndim() != 2 || rgb_cloud.feats.dim(1) != 3) {
    throw ShapeError("student_input: expected N x 3 colour features, got " + shape_str(rgb_cloud.feats.shape()));
  }
  return PointCloud{rgb_cloud.coords, concat_cols(rgb_cloud.coords, rgb_cloud.feats), rgb_cloud.pixel_index};
}

DenseArray student_backbone(const PointCloud& input, const ParamStore& params, double voxel_size,
                            BackboneTrace* trace) {
  const std::size_t n = input.size();
  if (n == 0) throw std::invalid_argument("student_backbone: empty point cloud");
  if (input.feats.ndim() != 2 || input.feats.dim(1) != 6 || input.feats.dim(0) != n) {
    throw ShapeError("student_backbone: expected N x 6 (xyz, rgb) features, got " + shape_str(input.feats.shape()));
  }
  if (!(voxel_size > 0)) throw std::invalid_argument("student_backbone: voxel_size must be positive");

  BackboneTrace local;
  BackboneTrace& t = trace ? *trace : local;
  t.input = input.feats;
  t.h1 = relu(linear(t.input, params.value(backbone_name(0) + "w"), params.value(backbone_name(0) + "b")));
  t.h2 = relu(linear(t.h1, params.value(backbone_name(1) + "w"), params.value(backbone_name(1) + "b")));

  // Group by voxel; within a voxel, order by the raw feature row so that the
  // summation order (and hence the result) does not depend on input order.
  std::vector<VoxelKey> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = voxel_key(input.coords.row(i), voxel_size);
  t.members.resize(n);
  std::iota(t.members.begin(), t.members.end(), 0);
  std::sort(t.members.begin(), t.members.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    const auto ra = t.input.row(a), rb = t.input.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  t.group_begin.clear();
  t.group_of.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (s == 0 || keys[t.members[s]] != keys[t.members[s - 1]]) t.group_begin.push_back(s);
    t.group_of[t.members[s]] = t.group_begin.size() - 1;
  }
  t.group_begin.push_back(n);

  const std::size_t w2 = t.h2.dim(1);
  t.context = DenseArray({n, w2});
  std::vector<double> mean(w2);
  for (std::size_t g = 0; g + 1 < t.group_begin.size(); ++g) {
    const std::size_t s = t.group_begin[g], e = t.group_begin[g + 1];
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t m = s; m < e; ++m) {
      const auto r = t.h2.row(t.members[m]);
      for (std::size_t j = 0; j < w2; ++j) mean[j] += r[j];
    }
    const double inv = 1.0 / static_cast<double>(e - s);
    for (double& v : mean) v *= inv;
    for (std::size_t m = s; m < e; ++m) std::copy(mean.begin(), mean.end(), t.context.row(t.members[m]).begin());
  }

  t.h3 = relu(linear(concat_cols(t.h2, t.context), params.value(backbone_name(2) + "w"),
                     params.value(backbone_name(2) + "b")));
  return t.h3;
}

void student_backbone_backward(const BackboneTrace& t, const DenseArray& grad_out, ParamStore& params) {
  const std::size_t w2 = t.h2.dim(1);
  DenseArray g3 = relu_backward(t.h3, grad_out);
  const DenseArray cat = concat_cols(t.h2, t.context);
  LinearGrads lg = linear_backward(cat, params.value(backbone_name(2) + "w"), g3);
  accumulate(params, backbone_name(2) + "w", lg.weights);
  accumulate(params, backbone_name(2) + "b", lg.bias);
  auto [g_h2, g_ctx] = split_cols(lg.input, w2);

  std::vector<double> sum(w2);
  for (std::size_t g = 0; g + 1 < t.group_begin.size(); ++g) {
    const std::size_t s = t.group_begin[g], e = t.group_begin[g + 1];
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t m = s; m < e; ++m) {
      const auto r = g_ctx.row(t.members[m]);
      for (std::size_t j = 0; j < w2; ++j) sum[j] += r[j];
    }
    const double inv = 1.0 / static_cast<double>(e - s);
    for (std::size_t m = s; m < e; ++m) {
      auto r = g_h2.row(t.members[m]);
      for (std::size_t j = 0; j < w2; ++j) r[j] += sum[j] * inv;
    }
  }

  DenseArray g2 = relu_backward(t.h2, g_h2);
  lg = linear_backward(t.h1, params.value(backbone_name(1) + "w"), g2);
  accumulate(params, backbone_name(1) + "w", lg.weights);
  accumulate(params, backbone_name(1) + "b", lg.bias);
  DenseArray g1 = relu_backward(t.h1, lg.input);
  lg = linear_backward(t.input, params.value(backbone_name(0) + "w"), g1, false);
  accumulate(params, backbone_name(0) + "w", lg.weights);
  accumulate(params, backbone_name(0) + "b", lg.bias);
}

DenseArray projection_head(const DenseArray& features, const ParamStore& params, HeadTrace* trace) {
  DenseArray projected = linear(features, params.value(std::string(kHeadNs) + "w"), params.value(std::string(kHeadNs) + "b"));
  DenseArray out = l2_normalize_rows(projected);
  if (trace) {
    trace->input = features;
    trace->projected = std::move(projected);
  }
  return out;
}

DenseArray projection_head_backward(const HeadTrace& trace, const DenseArray& grad_out, ParamStore& params) {
  DenseArray g = l2_normalize_rows_backward(trace.projected, grad_out);
  LinearGrads lg = linear_backward(trace.input, params.value(std::string(kHeadNs) + "w"), g);
  accumulate(params, std::string(kHeadNs) + "w", lg.weights);
  accumulate(params, std::string(kHeadNs) + "b", lg.bias);
  return std::move(lg.input);
}

DenseArray student_forward(const PointCloud& input, const ParamStore& params, double voxel_size,
                           StudentTrace* trace) {
  DenseArray feats = student_backbone(input, params, voxel_size, trace ? &trace->backbone : nullptr);
  return projection_head(feats, params, trace ? &trace->head : nullptr);
}

void student_backward(const StudentTrace& trace, const DenseArray& grad_out, ParamStore& params) {
  student_backbone_backward(trace.backbone, projection_head_backward(trace.head, grad_out, params), params);
}

std::vector<std::size_t> voxel_closure(const PointCloud& cloud, std::span<const std::size_t> rows, double voxel_size) {
  std::vector<VoxelKey> wanted;
  wanted.reserve(rows.size());
  for (auto r : rows) wanted.push_back(voxel_key(cloud.coords.row(r), voxel_size));
  std::sort(wanted.begin(), wanted.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (std::binary_search(wanted.begin(), wanted.end(), voxel_key(cloud.coords.row(i), voxel_size))) out.push_back(i);
  }
  return out;
}

PointCloud select_points(const PointCloud& cloud, std::span<const std::size_t> rows) {
  PointCloud out{gather_rows(cloud.coords, rows), gather_rows(cloud.feats, rows), {}};
  out.pixel_index.reserve(rows.size());
  for (auto r : rows) out.pixel_index.push_back(cloud.pixel_index[r]);
  return out;
}

// ---- classifier ------------------------------------------------------------------

DenseArray classifier_forward(const DenseArray& embeddings, const ParamStore& params, const std::string& prefix,
                              int class_count) {
  const DenseArray& w = params.value(prefix + "w");
  if (w.ndim() != 2 || static_cast<int>(w.dim(1)) != class_count) {
    throw ShapeError("classifier_forward: weights " + shape_str(w.shape()) + " do not produce " +
                     std::to_string(class_count) + " classes");
  }
  return linear(embeddings, w, params.value(prefix + "b"));
}

DenseArray classifier_backward(const DenseArray& embeddings, const DenseArray& grad_logits, ParamStore& params,
                               const std::string& prefix) {
  LinearGrads lg = linear_backward(embeddings, params.value(prefix + "w"), grad_logits);
  accumulate(params, prefix + "w", lg.weights);
  accumulate(params, prefix + "b", lg.bias);
  return std::move(lg.input);
}

}  // namespace ppkt
