#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "ppkt/param_store.hpp"
#include "ppkt/rng.hpp"

namespace ppkt {

/// Evaluates a scalar loss and accumulates its analytic gradient into the
/// store's (pre-zeroed) gradient slots.
using LossFn = std::function<double(ParamStore&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

/// Compares analytic gradients against central finite differences at
/// sample_count randomly chosen trainable scalars. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double step,
                           std::size_t sample_count, Rng& rng);

}  // namespace ppkt
