#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ssm/apl/apl.hpp"
#include "ssm/csmc/csmc.hpp"
#include "ssm/cti/cti.hpp"
#include "ssm/objective/adam.hpp"
#include "ssm/objective/objective.hpp"

namespace ssm::harness {

enum class ClassifierSharing { shared, unshared };

struct RunConfig {
  // Data shape.
  std::size_t feature_dim = 16;
  std::size_t classes = 6;  // action classes, background excluded
  std::size_t horizon = 4;

  // Model.
  std::size_t memory_length = 511;
  std::size_t clusters = 4;
  std::size_t d_model = 16;
  std::size_t d_edge = 8;
  std::size_t heads = 4;
  std::size_t gcn_layers = 2;
  double delta = 8.0;
  bool positional_encoding = true;
  cti::InteractionSwitches interaction;
  ClassifierSharing sharing = ClassifierSharing::shared;
  std::size_t em_max_iters = 50;
  double em_tol = 1e-6;

  // Objective and optimisation.
  double lambda_a = 1.0;
  double lambda_st = 0.1;
  bool detach_cue = false;  // stop-gradient on p_st inside the consistency term
  double learning_rate = 3e-3;
  std::uint64_t warmup_steps = 100;
  bool cosine_decay = true;  // learning rate decays to zero at the last step
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t eval_every = 100;
  bool freeze_non_classifier = false;
  std::uint64_t seed = 0;

  void validate() const;

  csmc::CsmcConfig csmc() const;
  apl::AplConfig apl() const;
  cti::CtiConfig cti() const;
  objective::LossWeights loss_weights() const;
  objective::AdamConfig adam() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);

// Toy configuration used by gradient checks: L_m = 15, K = 2, d_model = 8.
RunConfig toy_config();

// Interaction case numbering: 1 none, 2 past+present, 3 past+future,
// 4 present+future, 5 all.
cti::InteractionSwitches interaction_case(int case_number);

}  // namespace ssm::harness
