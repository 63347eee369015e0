#pragma once

#include <functional>
#include <string>

#include "ssm/numerics/autodiff.hpp"

namespace ssm::num {

// Builds a scalar loss on the given tape from the given parameters.
using LossFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients against central differences,
// |g_auto - g_fd| / max(1, |g_fd|), maximised over every parameter scalar.
GradCheckReport grad_check(const LossFn& loss_fn, const ParamStore& params, double eps = 1e-4);

}  // namespace ssm::num
