#include <algorithm>

#include "ppkt/trainer.hpp"

namespace ppkt {

ParamStore init_student_params(const TrainConfig& cfg) {
  cfg.validate();
  // Same draw order as init_pretrain_params, so scratch equals the pretraining start.
  ParamStore params;
  Rng init_rng(cfg.seed, 1);
  init_upl(params, cfg.model, init_rng);
  init_student(params, cfg.model, init_rng);
  return params;
}

ModelConfig infer_model(const ParamStore& params, ModelConfig base) {
  auto dims = [&](const std::string& name) -> const Shape& {
    if (!params.contains(name)) throw std::invalid_argument("checkpoint lacks parameter '" + name + "'");
    return params.value(name).shape();
  };
  const std::string t(kTeacherNs), s(kStudentNs), h(kHeadNs);
  if (params.contains(t + "conv1/w")) {
    base.teacher_channels = {dims(t + "conv1/w")[3], dims(t + "conv2/w")[3], dims(t + "conv3/w")[3]};
    if (params.contains(t + "cls/w")) base.class_count = static_cast<int>(dims(t + "cls/w")[3]);
  }
  if (params.contains(s + "fc1/w")) {
    base.student_widths = {dims(s + "fc1/w")[1], dims(s + "fc2/w")[1]};
  }
  if (params.contains(h + "w")) base.embed_dim = dims(h + "w")[1];
  base.validate();
  return base;
}

GradCheckReport pipeline_grad_check(LossKind kind, std::uint64_t seed, std::size_t samples, double step) {
  TrainConfig cfg;
  cfg.loss_kind = kind;
  cfg.seed = seed;
  cfg.pairs_per_frame = 12;
  cfg.model.embed_dim = 8;
  cfg.model.teacher_channels = {4, 4, 6};
  cfg.model.student_widths = {6, 8};
  cfg.model.class_count = 4;

  GenConfig gen;
  gen.scenes = 1;
  gen.frames_per_scene = 3;
  gen.seed = seed;
  gen.class_count = cfg.model.class_count;
  const auto frames = generate_frames(gen);

  ParamStore teacher;
  Rng teacher_rng(seed, 9);
  init_teacher(teacher, cfg.model, teacher_rng);
  ParamStore params = init_pretrain_params(teacher, cfg);
  // Zero biases put tiny dead layers exactly on ReLU kinks and can leave
  // all-zero rows in front of a normalisation; probe a generic point instead.
  Rng jitter(seed, 8);
  for (auto& p : params) {
    if (!p.name.ends_with("/b")) continue;
    for (double& v : p.value.data()) v = jitter.uniform(-0.1, 0.1);
  }

  const LossFn loss = [&](ParamStore& p) {
    Rng rng(seed, 5);
    return pipeline_loss(frames, p, cfg, rng);
  };
  Rng probe_rng(seed, 6);
  return grad_check(loss, params, step, samples, probe_rng);
}

}  // namespace ppkt
