#include "ssm/apl/apl.hpp"

#include <cmath>

#include "ssm/errors.hpp"

namespace ssm::apl {

using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;
namespace ops = num::ops;

std::vector<std::pair<std::size_t, std::size_t>> edge_list(std::size_t nodes) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = 0; j < nodes; ++j)
      if (i != j) edges.emplace_back(i, j);
  return edges;
}

std::size_t edge_index(std::size_t src, std::size_t dst, std::size_t nodes) {
  if (src == dst || src >= nodes || dst >= nodes) throw ArgumentError("edge_index: no such edge");
  return src * (nodes - 1) + (dst < src ? dst : dst - 1);
}

std::string layer_prefix(std::size_t layer) { return "gcn." + std::to_string(layer); }

void init_params(ParamStore& store, const AplConfig& config, std::mt19937_64& rng) {
  const std::size_t d = config.d_model, de = config.d_edge;
  num::AttentionBlock::init(store, "apl.ca", d, rng);
  store.add("apl.edge.weight", num::glorot_uniform(de, d, rng));
  store.add("apl.edge.bias", Tensor({de}, 0.0));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto p = layer_prefix(l);
    store.add(p + ".U", num::glorot_uniform(d, d, rng));
    store.add(p + ".V", num::glorot_uniform(d, d, rng));
    store.add(p + ".A", num::glorot_uniform(d, d, rng));
    store.add(p + ".B", num::glorot_uniform(d, d, rng));
    store.add(p + ".C", num::glorot_uniform(d, de, rng));
    store.add(p + ".gate_bias", Tensor({d}, 0.0));
    store.add(p + ".P", num::glorot_uniform(de, d, rng));
    store.add(p + ".Q", num::glorot_uniform(de, d, rng));
    store.add(p + ".R", num::glorot_uniform(de, de, rng));
    store.add(p + ".edge_bias", Tensor({de}, 0.0));
    store.add(p + ".node_norm.gain", Tensor({d}, 1.0));
    store.add(p + ".node_norm.bias", Tensor({d}, 0.0));
    store.add(p + ".edge_norm.gain", Tensor({de}, 1.0));
    store.add(p + ".edge_norm.bias", Tensor({de}, 0.0));
  }
  store.add("apl.readout.weight", num::glorot_uniform(d, d, rng));
  store.add("apl.readout.bias", Tensor({d}, 0.0));
}

StGraph build_st_graph(Tape& tape, const ParamStore& store, Var states, const AplConfig& config) {
  const std::size_t n = states.rows();
  if (n < 2) throw ArgumentError("build_st_graph: need at least two critical states");
  const std::size_t heads = config.heads;
  Var q = ops::linear(states, tape.param(store, "apl.ca.wq"));
  Var k = ops::linear(states, tape.param(store, "apl.ca.wk"));
  Var v = ops::linear(states, tape.param(store, "apl.ca.wv"));
  const std::size_t width = q.cols();
  if (heads == 0 || width % heads != 0) throw DimensionError("build_st_graph: width not divisible by head count");
  const std::size_t d_head = width / heads;

  std::vector<std::size_t> src, dst;
  for (const auto& [i, j] : edge_list(n)) {
    src.push_back(i);
    dst.push_back(j);
  }
  // All edges at once: edge (i, j) is a one-query, one-key attention with
  // S_i as query and S_j as key and value.
  Var qe = ops::gather_rows(q, src);
  Var ke = ops::gather_rows(k, dst);
  Var ve = ops::gather_rows(v, dst);
  std::vector<Var> parts;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ops::slice_cols(qe, h * d_head, d_head);
    Var kh = ops::slice_cols(ke, h * d_head, d_head);
    Var logits = ops::scale(ops::row_sums(ops::mul(qh, kh)), 1.0 / std::sqrt(static_cast<double>(d_head)));
    Var weights = ops::softmax_rows(logits);
    parts.push_back(ops::scale_rows(ops::slice_cols(ve, h * d_head, d_head), weights));
  }
  Var attended = heads == 1 ? parts[0] : ops::concat_cols(parts);
  Var edges = ops::linear(attended, tape.param(store, "apl.edge.weight"), tape.param(store, "apl.edge.bias"));
  return {states, edges};
}

GcnOutput gated_gcn_forward(Tape& tape, const ParamStore& store, const StGraph& graph, const AplConfig& config) {
  const std::size_t n = graph.node_count();
  const std::size_t n_edges = n * (n - 1);
  if (n < 2 || graph.edges.rows() != n_edges) throw DimensionError("gated_gcn_forward: malformed graph");

  std::vector<std::size_t> src, dst;
  Tensor incidence = Tensor::matrix(n, n_edges);
  for (const auto& [i, j] : edge_list(n)) {
    incidence(i, src.size()) = 1.0;
    src.push_back(i);
    dst.push_back(j);
  }
  Var scatter = tape.constant(std::move(incidence));

  GcnOutput out{graph.nodes, graph.edges, {}};
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto p = layer_prefix(l);
    auto param = [&](const char* name) { return tape.param(store, p + name); };
    Var h = out.nodes;
    Var e = out.edges;

    Var ah = ops::linear(h, param(".A"));
    Var bh = ops::linear(h, param(".B"));
    Var ce = ops::linear(e, param(".C"));
    Var pre = ops::add(ops::add(ops::gather_rows(ah, src), ops::gather_rows(bh, dst)), ce);
    Var gates = ops::sigmoid(ops::add_row(pre, param(".gate_bias")));
    out.gates.push_back(gates);

    Var vh = ops::linear(h, param(".V"));
    Var num = ops::matmul(scatter, ops::mul(gates, ops::gather_rows(vh, dst)));
    Var den = ops::add_scalar(ops::matmul(scatter, gates), kGateEps);
    Var node_pre = ops::add(ops::linear(h, param(".U")), ops::div(num, den));
    Var node_delta = ops::relu(ops::layer_norm_rows(node_pre, param(".node_norm.gain"), param(".node_norm.bias")));

    Var edge_pre = ops::add(ops::add(ops::linear(ops::gather_rows(h, src), param(".P")),
                                     ops::linear(ops::gather_rows(h, dst), param(".Q"))),
                            ops::linear(e, param(".R")));
    edge_pre = ops::add_row(edge_pre, param(".edge_bias"));
    Var edge_delta = ops::relu(ops::layer_norm_rows(edge_pre, param(".edge_norm.gain"), param(".edge_norm.bias")));

    out.nodes = ops::add(h, node_delta);
    out.edges = ops::add(e, edge_delta);
  }
  return out;
}

Var extract_future_cue(Tape& tape, const ParamStore& store, Var nodes) {
  return ops::linear(ops::mean_rows(nodes), tape.param(store, "apl.readout.weight"),
                     tape.param(store, "apl.readout.bias"));
}

}  // namespace ssm::apl
