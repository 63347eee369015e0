#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ssm/numerics/attention.hpp"

namespace ssm::apl {

struct AplConfig {
  std::size_t d_model = 16;
  std::size_t d_edge = 8;
  std::size_t heads = 4;
  std::size_t layers = 2;
};

// Complete directed graph without self-loops. Edge e = (src, dst) is stored
// in row e of `edges`, ordered by src then dst (see edge_list).
struct StGraph {
  num::Var nodes;  // n x d_model
  num::Var edges;  // n (n - 1) x d_edge
  std::size_t node_count() const { return nodes.rows(); }
};

std::vector<std::pair<std::size_t, std::size_t>> edge_list(std::size_t nodes);
std::size_t edge_index(std::size_t src, std::size_t dst, std::size_t nodes);

void init_params(num::ParamStore& store, const AplConfig& config, std::mt19937_64& rng);

// E_ij = edge projection of cross-attention with S_i as query and S_j as the
// key/value context; E_ji swaps the roles through the same parameters.
StGraph build_st_graph(num::Tape& tape, const num::ParamStore& store, num::Var states, const AplConfig& config);

struct GcnOutput {
  num::Var nodes;
  num::Var edges;
  std::vector<num::Var> gates;  // per layer, one row per edge
};

// Residual gated graph convolution:
//   eta_ij = sigmoid(A h_i + B h_j + C e_ij)
//   h_i   += relu(norm(U h_i + sum_j eta_ij * V h_j / (sum_j eta_ij + eps)))
//   e_ij  += relu(norm(P h_i + Q h_j + R e_ij))
GcnOutput gated_gcn_forward(num::Tape& tape, const num::ParamStore& store, const StGraph& graph,
                            const AplConfig& config);

// Mean over node vectors followed by the readout projection.
num::Var extract_future_cue(num::Tape& tape, const num::ParamStore& store, num::Var nodes);

inline constexpr double kGateEps = 1e-6;

std::string layer_prefix(std::size_t layer);

}  // namespace ssm::apl
