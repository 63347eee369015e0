#include "ssm/cti/cti.hpp"

#include <cmath>

#include "ssm/errors.hpp"

namespace ssm::cti {

using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;
namespace ops = num::ops;

void init_params(ParamStore& store, const CtiConfig& config, std::mt19937_64& rng) {
  num::AttentionBlock::init(store, kPresentPrefix, config.d_model, rng);
  num::AttentionBlock::init(store, kFuturePrefix, config.d_model, rng);
  store.add(kPositionParam, num::glorot_uniform(config.past_slots + 2, config.d_model, rng));
}

void init_classifier(ParamStore& store, const std::string& prefix, std::size_t classes, std::size_t d_model,
                     std::mt19937_64& rng) {
  store.add(prefix + ".weight", num::glorot_uniform(classes, d_model, rng));
  store.add(prefix + ".bias", Tensor({classes}, 0.0));
}

namespace {

enum Slot : std::size_t { kPast, kPresent, kFuture };

void check_bundle(const TemporalBundle& bundle, const CtiConfig& config) {
  if (!bundle.present.valid() || !bundle.future.valid()) throw StateError("cti: bundle lacks present or future feature");
  if (config.past_slots > 0 && !bundle.past) throw StateError("cti: bundle lacks past features");
  if (bundle.past && bundle.past->rows() != config.past_slots) throw DimensionError("cti: past slot count mismatch");
}

Var with_position(Tape& tape, const ParamStore& store, Var tokens, std::size_t first_slot, const CtiConfig& config) {
  if (!config.positional_encoding) return tokens;
  Var pos = ops::slice_rows(tape.param(store, kPositionParam), first_slot, tokens.rows());
  return ops::add(tokens, pos);
}

// Runs CA(query, context, context) + query over the enabled slots.
Var refine(Tape& tape, const ParamStore& store, const std::string& prefix, Var query, std::size_t query_slot,
           std::optional<Var> past, Var present, Var future, const CtiConfig& config) {
  const auto& on = config.interaction;
  const std::size_t k = config.past_slots;
  std::vector<Var> context;
  if (on.past && past) context.push_back(with_position(tape, store, *past, 0, config));
  if (on.present) context.push_back(with_position(tape, store, present, k, config));
  if (on.future) context.push_back(with_position(tape, store, future, k + 1, config));
  Var q = with_position(tape, store, query, query_slot == kPresent ? k : k + 1, config);
  const num::AttentionBlock block{prefix, config.heads};
  Var attended = block.forward(tape, store, q, ops::concat_rows(context)).output;
  return ops::add(attended, query);
}

bool stage_enabled(const InteractionSwitches& on, Slot slot) {
  const int others = (slot != kPast && on.past) + (slot != kPresent && on.present) + (slot != kFuture && on.future);
  const bool self = slot == kPresent ? on.present : on.future;
  return self && others > 0;
}

}  // namespace

Var refine_present(Tape& tape, const ParamStore& store, TemporalBundle& bundle, const CtiConfig& config) {
  check_bundle(bundle, config);
  Var out = bundle.present;
  if (stage_enabled(config.interaction, kPresent)) {
    out = refine(tape, store, kPresentPrefix, bundle.present, kPresent, bundle.past, bundle.present, bundle.future,
                 config);
  }
  bundle.present_refined = out;
  return out;
}

Var refine_future(Tape& tape, const ParamStore& store, TemporalBundle& bundle, const CtiConfig& config) {
  check_bundle(bundle, config);
  if (!bundle.present_refined) throw StateError("cti: refine_future called before refine_present");
  Var out = bundle.future;
  if (stage_enabled(config.interaction, kFuture)) {
    out = refine(tape, store, kFuturePrefix, bundle.future, kFuture, bundle.past, *bundle.present_refined,
                 bundle.future, config);
  }
  bundle.future_refined = out;
  return out;
}

Var classify(Tape& tape, const ParamStore& store, Var feature, const std::string& prefix) {
  Var w = tape.param(store, prefix + ".weight");
  if (feature.cols() != w.cols()) throw DimensionError("classify: feature width mismatch");
  return ops::softmax_rows(ops::linear(feature, w, tape.param(store, prefix + ".bias")));
}

std::vector<double> classify(const std::vector<double>& feature, const ClassifierParams& params) {
  const std::size_t classes = params.weight.rows(), d = params.weight.cols();
  if (feature.size() != d || params.bias.size() != classes) throw DimensionError("classify: dimension mismatch");
  Tensor logits = Tensor::matrix(1, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double s = params.bias[c];
    for (std::size_t j = 0; j < d; ++j) s += params.weight(c, j) * feature[j];
    logits[c] = s;
  }
  return num::softmax_rows(logits).data();
}

}  // namespace ssm::cti
