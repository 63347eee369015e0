#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "ssm/numerics/autodiff.hpp"

namespace ssm::num {

struct AttentionResult {
  Var output;   // n_q x d_v
  Var weights;  // n_q x n_k, rows sum to one
};

// Single-head scaled dot-product attention:
//   out_i = sum_j softmax_j(Q_i . K_j / sqrt(d_k) + bias_ij) V_j
// Keys whose mask entry is 0 receive zero weight.
AttentionResult cross_attention(Var queries, Var keys, Var values, std::optional<Var> logit_bias = std::nullopt,
                                std::span<const std::uint8_t> key_mask = {});

// Value-level softmax over rows, for callers outside a tape.
Tensor softmax_rows(const Tensor& m);

// Learned Q/K/V projections split into `heads` equal column slices, each
// attended with cross_attention and concatenated back. No output projection.
struct AttentionBlock {
  std::string prefix;  // parameters: <prefix>.wq, <prefix>.wk, <prefix>.wv
  std::size_t heads = 1;

  static void init(ParamStore& store, const std::string& prefix, std::size_t d_model, std::mt19937_64& rng);

  struct Output {
    Var output;
    std::vector<Var> head_weights;
  };
  Output forward(Tape& tape, const ParamStore& store, Var queries, Var context,
                 std::optional<Var> logit_bias = std::nullopt, std::span<const std::uint8_t> key_mask = {}) const;
};

}  // namespace ssm::num
