#include "ssm/objective/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ssm/errors.hpp"

namespace ssm::objective {

OptimState OptimState::for_params(const num::ParamStore& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

double scheduled_learning_rate(const AdamConfig& config, std::uint64_t step) {
  const double t = static_cast<double>(step);
  double lr = config.learning_rate;
  if (config.warmup_steps > 0) lr *= std::min(1.0, t / static_cast<double>(config.warmup_steps));
  if (config.decay_steps > 0) {
    const double frac = std::min(1.0, t / static_cast<double>(config.decay_steps));
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  return lr;
}

void adam_update(num::ParamStore& params, const num::ParamStore& grads, OptimState& state, const AdamConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_update: parameter/gradient/state sets differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double lr = scheduled_learning_rate(config, state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);

  for (auto& [name, p] : params) {
    const auto& g = grads.get(name);
    auto& m = state.first_moment.get(name);
    auto& v = state.second_moment.get(name);
    if (!g.same_shape(p) || !m.same_shape(p) || !v.same_shape(p)) {
      throw DimensionError("adam_update: shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
    }
  }
}

}  // namespace ssm::objective
