#include "ppkt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ppkt {

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double step,
                           std::size_t sample_count, Rng& rng) {
  if (!(step >= 1e-7 && step <= 1e-4)) throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-4]");
  if (sample_count == 0) throw std::invalid_argument("grad_check: sample_count must be positive");

  std::vector<Param*> trainable;
  std::size_t total = 0;
  for (auto& p : params) {
    if (p.trainable && p.value.size() > 0) {
      trainable.push_back(&p);
      total += p.value.size();
    }
  }
  if (total == 0) throw std::invalid_argument("grad_check: no trainable parameters");

  params.zero_grad();
  const double base = loss_fn(params);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss at the base point");
  std::vector<DenseArray> analytic;
  analytic.reserve(trainable.size());
  for (auto* p : trainable) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t s = 0; s < sample_count; ++s) {
    std::size_t flat = rng.below(total);
    std::size_t which = 0;
    while (flat >= trainable[which]->value.size()) {
      flat -= trainable[which]->value.size();
      ++which;
    }
    Param& p = *trainable[which];
    const double saved = p.value[flat];

    p.value[flat] = saved + step;
    params.zero_grad();
    const double plus = loss_fn(params);
    p.value[flat] = saved - step;
    params.zero_grad();
    const double minus = loss_fn(params);
    p.value[flat] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw std::runtime_error("grad_check: non-finite loss while probing '" + p.name + "'[" +
                               std::to_string(flat) + "]");
    }

    const double numeric = (plus - minus) / (2.0 * step);
    const double a = analytic[which][flat];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (report.probes++ == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = p.name;
      report.worst_index = flat;
    }
  }
  params.zero_grad();
  for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i]->grad = analytic[i];
  return report;
}

}  // namespace ppkt
