#pragma once

#include <cstdint>

#include "ssm/numerics/param_store.hpp"

namespace ssm::objective {

struct AdamConfig {
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t warmup_steps = 0;  // linear ramp of the learning rate
  std::uint64_t decay_steps = 0;   // cosine decay to zero by this step; 0 keeps it constant
};

// Learning rate used by the update that brings the step counter to `step`.
double scheduled_learning_rate(const AdamConfig& config, std::uint64_t step);

struct OptimState {
  num::ParamStore first_moment;
  num::ParamStore second_moment;
  std::uint64_t step = 0;

  static OptimState for_params(const num::ParamStore& params);
};

// One bias-corrected Adam step. Names and shapes of params, grads and the
// moment stores must agree.
void adam_update(num::ParamStore& params, const num::ParamStore& grads, OptimState& state, const AdamConfig& config);

}  // namespace ssm::objective
