#include "ssm/numerics/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssm/errors.hpp"

namespace ssm::num {

AttentionResult cross_attention(Var queries, Var keys, Var values, std::optional<Var> logit_bias,
                                std::span<const std::uint8_t> key_mask) {
  const std::size_t d_k = queries.cols();
  if (d_k == 0 || keys.cols() != d_k) throw DimensionError("cross_attention: query/key width mismatch");
  if (keys.rows() == 0 || values.rows() != keys.rows()) throw DimensionError("cross_attention: key/value count mismatch");
  if (logit_bias && (logit_bias->rows() != queries.rows() || logit_bias->cols() != keys.rows())) {
    throw DimensionError("cross_attention: bias shape must be n_q x n_k");
  }
  Var logits = ops::scale(ops::matmul_nt(queries, keys), 1.0 / std::sqrt(static_cast<double>(d_k)));
  if (logit_bias) logits = ops::add(logits, *logit_bias);
  Var weights = ops::softmax_rows(logits, key_mask);
  return {ops::matmul(weights, values), weights};
}

Tensor softmax_rows(const Tensor& m) {
  Tensor out = Tensor::matrix(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m.cols(); ++c) mx = std::max(mx, m(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) z += (out(r, c) = std::exp(m(r, c) - mx));
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) /= z;
  }
  if (!out.all_finite()) throw NumericError("softmax_rows: non-finite input");
  return out;
}

void AttentionBlock::init(ParamStore& store, const std::string& prefix, std::size_t d_model, std::mt19937_64& rng) {
  store.add(prefix + ".wq", glorot_uniform(d_model, d_model, rng));
  store.add(prefix + ".wk", glorot_uniform(d_model, d_model, rng));
  store.add(prefix + ".wv", glorot_uniform(d_model, d_model, rng));
}

AttentionBlock::Output AttentionBlock::forward(Tape& tape, const ParamStore& store, Var queries, Var context,
                                               std::optional<Var> logit_bias,
                                               std::span<const std::uint8_t> key_mask) const {
  Var q = ops::linear(queries, tape.param(store, prefix + ".wq"));
  Var k = ops::linear(context, tape.param(store, prefix + ".wk"));
  Var v = ops::linear(context, tape.param(store, prefix + ".wv"));
  const std::size_t width = q.cols();
  if (heads == 0 || width % heads != 0) throw DimensionError("attention width not divisible by head count");
  Output out;
  if (heads == 1) {
    auto r = cross_attention(q, k, v, logit_bias, key_mask);
    out.output = r.output;
    out.head_weights.push_back(r.weights);
    return out;
  }
  const std::size_t d_head = width / heads;
  std::vector<Var> parts;
  for (std::size_t h = 0; h < heads; ++h) {
    auto r = cross_attention(ops::slice_cols(q, h * d_head, d_head), ops::slice_cols(k, h * d_head, d_head),
                             ops::slice_cols(v, h * d_head, d_head), logit_bias, key_mask);
    parts.push_back(r.output);
    out.head_weights.push_back(r.weights);
  }
  out.output = ops::concat_cols(parts);
  return out;
}

}  // namespace ssm::num
