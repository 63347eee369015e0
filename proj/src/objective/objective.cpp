#include "ssm/objective/objective.hpp"

#include "ssm/errors.hpp"

namespace ssm::objective {

using num::Var;
namespace ops = num::ops;

namespace {

Var cross_entropy(Var p, std::size_t label, const char* what) {
  if (p.rows() != 1) throw DimensionError(std::string(what) + ": expected a single distribution row");
  if (label >= p.cols()) throw ArgumentError(std::string(what) + ": class index out of range");
  return ops::scale(ops::log_floor(ops::element(p, 0, label), kProbFloor), -1.0);
}

}  // namespace

Var detection_loss(Var p_d, std::size_t label) { return cross_entropy(p_d, label, "detection_loss"); }

Var anticipation_loss(Var p_a, std::size_t label) { return cross_entropy(p_a, label, "anticipation_loss"); }

Var consistency_loss(Var p_st, Var p_a) {
  if (p_st.rows() != p_a.rows() || p_st.cols() != p_a.cols()) {
    throw DimensionError("consistency_loss: distributions have different support");
  }
  Var log_ratio = ops::sub(ops::log_floor(p_st, kProbFloor), ops::log_floor(p_a, kProbFloor));
  return ops::sum(ops::mul(p_st, log_ratio));
}

Var total_loss(Var l_d, Var l_a, Var l_st, const LossWeights& weights) {
  if (weights.anticipation < 0.0 || weights.consistency < 0.0) throw ArgumentError("loss weights must be non-negative");
  return ops::add(ops::add(l_d, ops::scale(l_a, weights.anticipation)), ops::scale(l_st, weights.consistency));
}

double total_loss(double l_d, double l_a, double l_st, const LossWeights& weights) {
  if (weights.anticipation < 0.0 || weights.consistency < 0.0) throw ArgumentError("loss weights must be non-negative");
  return l_d + weights.anticipation * l_a + weights.consistency * l_st;
}

}  // namespace ssm::objective
