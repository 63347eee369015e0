#pragma once

#include <optional>
#include <random>
#include <string>

#include "ssm/numerics/attention.hpp"

namespace ssm::cti {

// Which temporal slots take part in the interaction. A refinement stage runs
// only when its own slot and at least one other slot are enabled, and
// attends over the enabled slots only.
struct InteractionSwitches {
  bool past = true;
  bool present = true;
  bool future = true;
};

struct CtiConfig {
  std::size_t d_model = 16;
  std::size_t heads = 4;
  std::size_t past_slots = 4;  // K
  bool positional_encoding = true;
  InteractionSwitches interaction;
};

struct TemporalBundle {
  std::optional<num::Var> past;  // K x d_model, ascending anchor order; empty when K = 0
  num::Var present;              // 1 x d_model
  num::Var future;               // 1 x d_model
  std::optional<num::Var> present_refined;
  std::optional<num::Var> future_refined;
};

inline const std::string kPositionParam = "cti.pos";
inline const std::string kPresentPrefix = "cti.present";
inline const std::string kFuturePrefix = "cti.future";

void init_params(num::ParamStore& store, const CtiConfig& config, std::mt19937_64& rng);

// F_c' = CA(F_c, F_t, F_t) + F_c with F_t = [F_p; F_c; F_a].
num::Var refine_present(num::Tape& tape, const num::ParamStore& store, TemporalBundle& bundle, const CtiConfig& config);

// F_a' = CA(F_a, F_t', F_t') + F_a with F_t' = [F_p; F_c'; F_a].
// Throws StateError when refine_present has not run on this bundle.
num::Var refine_future(num::Tape& tape, const num::ParamStore& store, TemporalBundle& bundle, const CtiConfig& config);

struct ClassifierParams {
  num::Tensor weight;  // (C + 1) x d_model, row 0 = background
  num::Tensor bias;    // C + 1
};

inline const std::string kSharedHead = "cls";
inline const std::string kAnticipationHead = "cls_anticipation";

void init_classifier(num::ParamStore& store, const std::string& prefix, std::size_t classes, std::size_t d_model,
                     std::mt19937_64& rng);

// softmax(W f + b) over the C + 1 classes.
num::Var classify(num::Tape& tape, const num::ParamStore& store, num::Var feature, const std::string& prefix = kSharedHead);
std::vector<double> classify(const std::vector<double>& feature, const ClassifierParams& params);

}  // namespace ssm::cti
