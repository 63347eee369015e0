#include "ssm/harness/model.hpp"

#include <random>

#include "ssm/errors.hpp"

namespace ssm::harness {

using num::ParamStore;
using num::Tape;
using num::Var;
namespace ops = num::ops;

SsmModel::SsmModel(RunConfig config) : config_(std::move(config)) { config_.validate(); }

ParamStore SsmModel::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamStore store;
  csmc::init_params(store, config_.feature_dim, config_.d_model, rng);
  apl::init_params(store, config_.apl(), rng);
  cti::init_params(store, config_.cti(), rng);
  cti::init_classifier(store, cti::kSharedHead, config_.classes + 1, config_.d_model, rng);
  if (config_.sharing == ClassifierSharing::unshared) {
    cti::init_classifier(store, cti::kAnticipationHead, config_.classes + 1, config_.d_model, rng);
  }
  return store;
}

const std::string& SsmModel::anticipation_head() const {
  return config_.sharing == ClassifierSharing::shared ? cti::kSharedHead : cti::kAnticipationHead;
}

WindowForward SsmModel::forward(Tape& tape, const ParamStore& params, const csmc::MemoryWindow& window,
                                csmc::EmWarmStart* warm, std::optional<std::uint64_t> em_seed) const {
  if (window.feature_dim() != config_.feature_dim) throw DimensionError("model: feature width does not match config");
  if (window.memory_length() != config_.memory_length) throw DimensionError("model: window length does not match L_m");
  auto csmc_config = config_.csmc();
  if (em_seed) csmc_config.em_seed = *em_seed;

  WindowForward out;
  out.csmc = csmc::compress_window(tape, params, window, csmc_config, warm);
  Var states = out.csmc.compressed.states;
  const std::size_t k = config_.clusters;

  const auto graph = apl::build_st_graph(tape, params, states, config_.apl());
  const auto gcn = apl::gated_gcn_forward(tape, params, graph, config_.apl());
  Var cue = apl::extract_future_cue(tape, params, gcn.nodes);

  cti::TemporalBundle bundle;
  bundle.past = ops::slice_rows(states, 0, k);
  bundle.present = ops::row(states, k);
  bundle.future = cue;
  const auto cti_config = config_.cti();
  Var present = cti::refine_present(tape, params, bundle, cti_config);
  Var future = cti::refine_future(tape, params, bundle, cti_config);

  out.p_d = cti::classify(tape, params, present, cti::kSharedHead);
  out.p_a = cti::classify(tape, params, future, anticipation_head());
  out.p_st = cti::classify(tape, params, cue, anticipation_head());
  return out;
}

LossParts SsmModel::loss(Tape& tape, const WindowForward& out, int y_d, int y_a) const {
  if (y_d < 0) throw ArgumentError("model: detection label required for training");
  LossParts parts;
  parts.detection = objective::detection_loss(out.p_d, static_cast<std::size_t>(y_d));
  Var cue = config_.detach_cue ? ops::stop_gradient(out.p_st) : out.p_st;
  parts.consistency = objective::consistency_loss(cue, out.p_a);
  Var l_a = tape.constant(num::Tensor::scalar(0.0));
  if (y_a >= 0) {
    parts.anticipation = objective::anticipation_loss(out.p_a, static_cast<std::size_t>(y_a));
    l_a = *parts.anticipation;
  }
  parts.total = objective::total_loss(parts.detection, l_a, parts.consistency, config_.loss_weights());
  return parts;
}

}  // namespace ssm::harness
