#include <cmath>
#include <stdexcept>

#include "ppkt/trainer.hpp"

namespace ppkt {

void sgd_step(ParamStore& params, double lr, double momentum, double weight_decay, VelocityState& velocity) {
  for (auto& p : params) {
    if (p.grad.shape() != p.value.shape()) {
      throw ShapeError("sgd_step: gradient of '" + p.name + "' has shape " + shape_str(p.grad.shape()) +
                       ", value has " + shape_str(p.value.shape()));
    }
  }
  for (auto& p : params) {
    if (p.trainable) {
      auto [it, fresh] = velocity.try_emplace(p.name, DenseArray::zeros_like(p.value));
      DenseArray& v = it->second;
      if (v.shape() != p.value.shape()) throw ShapeError("sgd_step: velocity of '" + p.name + "' has the wrong shape");
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum * v[i] + p.grad[i] + weight_decay * p.value[i];
        p.value[i] -= lr * v[i];
      }
    }
    p.grad.fill(0.0);
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    for (double g : p.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (!p.trainable) continue;
      for (double& g : p.grad.data()) g *= scale;
    }
  }
  return norm;
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (cfg.steps <= 1) return cfg.lr0;
  if (step >= cfg.steps) throw std::out_of_range("lr_schedule: step beyond the configured run");
  if (step == cfg.steps - 1) return cfg.lr0 * cfg.lr_final_factor;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
  return cfg.lr0 * std::pow(cfg.lr_final_factor, frac);
}

}  // namespace ppkt
