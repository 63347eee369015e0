#pragma once

#include <cstddef>
#include <cstdint>

#include "ssm/numerics/autodiff.hpp"

namespace ssm::objective {

inline constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double anticipation = 1.0;  // lambda_a
  double consistency = 0.1;   // lambda_st
};

// -log max(p[label], 1e-12) for a 1 x (C + 1) distribution.
num::Var detection_loss(num::Var p_d, std::size_t label);
num::Var anticipation_loss(num::Var p_a, std::size_t label);

// KL(p_st || p_a) = sum_c p_st[c] (log p_st[c] - log p_a[c]), floored logs.
num::Var consistency_loss(num::Var p_st, num::Var p_a);

num::Var total_loss(num::Var l_d, num::Var l_a, num::Var l_st, const LossWeights& weights);

double total_loss(double l_d, double l_a, double l_st, const LossWeights& weights);

}  // namespace ssm::objective
