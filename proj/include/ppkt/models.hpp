#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ppkt/dense_array.hpp"
#include "ppkt/geometry.hpp"
#include "ppkt/param_store.hpp"
#include "ppkt/rng.hpp"

namespace ppkt {

// Parameter namespaces. Everything under kTeacherNs is the 2D network; the
// PPKT stage freezes it by default.
inline constexpr const char* kTeacherNs = "teacher/";
inline constexpr const char* kUplNs = "upl/";
inline constexpr const char* kStudentNs = "student/";
inline constexpr const char* kHeadNs = "head/";
inline constexpr const char* kKdHeadNs = "kd_head/";
inline constexpr const char* kProbeNs = "probe/";

struct ModelConfig {
  std::size_t embed_dim = 128;
  std::vector<std::size_t> teacher_channels{16, 32, 64};
  std::vector<std::size_t> student_widths{64, 128};
  double tau = 0.04;
  int class_count = 6;
  double voxel_size = 0.025;

  static std::vector<std::size_t> small_widths() { return {32, 64}; }

  void validate() const;
  std::size_t teacher_out() const { return teacher_channels.back(); }
  std::size_t backbone_out() const { return student_widths.back(); }
};

/// Glorot-uniform weights, zero biases.
DenseArray glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

void init_teacher(ParamStore& params, const ModelConfig& cfg, Rng& rng);
void init_upl(ParamStore& params, const ModelConfig& cfg, Rng& rng);
/// Adds the backbone (student/) and the projection head (head/).
void init_student(ParamStore& params, const ModelConfig& cfg, Rng& rng);
/// Affine map in_dim -> class_count under `prefix`; zero weights when rng is null.
void init_classifier(ParamStore& params, const std::string& prefix, std::size_t in_dim, int class_count, Rng* rng);

// ---- 2D teacher: three 3x3 stride-2 conv + ReLU stages --------------------

struct TeacherTrace {
  DenseArray input;
  std::vector<DenseArray> activations;  // post-ReLU output of each stage
};

DenseArray teacher_forward(const DenseArray& color, const ParamStore& params, TeacherTrace* trace = nullptr);
void teacher_backward(const TeacherTrace& trace, const DenseArray& grad_out, ParamStore& params);

/// 1x1 classifier (teacher/cls) on the low-resolution teacher map.
DenseArray teacher_logits(const DenseArray& feature_map, const ParamStore& params);
void teacher_logits_backward(const DenseArray& feature_map, const DenseArray& grad_logits, ParamStore& params,
                             DenseArray* grad_feature_map);

// ---- upsampling feature projection layer -----------------------------------

struct UplTrace {
  DenseArray feature_map;
  DenseArray upsampled;  // (out_h * out_w) x C, before normalisation
  std::size_t proj_h = 0, proj_w = 0;
};

/// 1x1 conv to embed_dim, bilinear resize to (out_h, out_w), per-pixel L2 norm.
DenseArray upl_forward(const DenseArray& feature_map, const ParamStore& params, std::size_t out_h,
                       std::size_t out_w, UplTrace* trace = nullptr);
/// Returns the gradient w.r.t. the teacher feature map.
DenseArray upl_backward(const UplTrace& trace, const DenseArray& grad_out, ParamStore& params);

// ---- 3D student -------------------------------------------------------------

/// xyz (+) rgb, the 6-column input the student expects.
PointCloud student_input(const PointCloud& rgb_cloud);

struct BackboneTrace {
  DenseArray input, h1, h2, context, h3;
  std::vector<std::size_t> members;       // points ordered by (voxel, feature row)
  std::vector<std::size_t> group_begin;   // offsets into members, plus end sentinel
  std::vector<std::size_t> group_of;      // per point
};

/// Shared MLP 6 -> w1 -> w2, voxel-mean context concat, shared MLP 2 w2 -> w2.
DenseArray student_backbone(const PointCloud& input, const ParamStore& params, double voxel_size,
                            BackboneTrace* trace = nullptr);
/// Returns nothing; the input is data, not a parameter.
void student_backbone_backward(const BackboneTrace& trace, const DenseArray& grad_out, ParamStore& params);

struct HeadTrace {
  DenseArray input;
  DenseArray projected;
};

/// Shared linear w2 -> embed_dim followed by row L2 normalisation.
DenseArray projection_head(const DenseArray& features, const ParamStore& params, HeadTrace* trace = nullptr);
DenseArray projection_head_backward(const HeadTrace& trace, const DenseArray& grad_out, ParamStore& params);

struct StudentTrace {
  BackboneTrace backbone;
  HeadTrace head;
};

DenseArray student_forward(const PointCloud& input, const ParamStore& params, double voxel_size,
                           StudentTrace* trace = nullptr);
void student_backward(const StudentTrace& trace, const DenseArray& grad_out, ParamStore& params);

/// Indices (ascending) of every point that shares a voxel with one of `rows`.
/// Running the student on just these points reproduces the full-cloud output
/// at `rows` exactly.
std::vector<std::size_t> voxel_closure(const PointCloud& cloud, std::span<const std::size_t> rows, double voxel_size);

PointCloud select_points(const PointCloud& cloud, std::span<const std::size_t> rows);

// ---- linear classifier -------------------------------------------------------

DenseArray classifier_forward(const DenseArray& embeddings, const ParamStore& params, const std::string& prefix,
                              int class_count);
/// Accumulates parameter gradients; returns the gradient w.r.t. the embeddings.
DenseArray classifier_backward(const DenseArray& embeddings, const DenseArray& grad_logits, ParamStore& params,
                               const std::string& prefix);

}  // namespace ppkt
