#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ssm/harness/config.hpp"

namespace ssm::harness {

struct WindowForward {
  num::Var p_d;   // detection distribution, from F_c'
  num::Var p_a;   // anticipation distribution, from F_a'
  num::Var p_st;  // distribution of the raw future cue F_a
  csmc::CsmcOutput csmc;
};

struct LossParts {
  num::Var total;
  num::Var detection;
  std::optional<num::Var> anticipation;  // absent when the future label is undefined
  num::Var consistency;
};

// CSMC -> APL -> CTI -> classifier, over one memory window.
class SsmModel {
 public:
  explicit SsmModel(RunConfig config);

  const RunConfig& config() const noexcept { return config_; }
  num::ParamStore init_params(std::uint64_t seed) const;

  WindowForward forward(num::Tape& tape, const num::ParamStore& params, const csmc::MemoryWindow& window,
                        csmc::EmWarmStart* warm = nullptr, std::optional<std::uint64_t> em_seed = std::nullopt) const;

  // L_d + lambda_a L_a + lambda_st L_st for one window. y_a < 0 drops L_a.
  LossParts loss(num::Tape& tape, const WindowForward& out, int y_d, int y_a) const;

  const std::string& anticipation_head() const;

 private:
  RunConfig config_;
};

}  // namespace ssm::harness
