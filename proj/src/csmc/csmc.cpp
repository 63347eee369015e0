#include "ssm/csmc/csmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssm/errors.hpp"

namespace ssm::csmc {

using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;
namespace ops = num::ops;

MemoryWindow::MemoryWindow(Tensor features, std::vector<std::uint8_t> valid)
    : features_(std::move(features)), valid_(std::move(valid)) {
  if (features_.rank() != 2) throw DimensionError("memory window: features must be a matrix");
  if (valid_.size() != features_.rows()) throw DimensionError("memory window: mask length mismatch");
  if (!valid_.back()) throw ArgumentError("memory window: current frame must be valid");
}

MemoryWindow MemoryWindow::from_frames(std::span<const FeatureFrame> memory, const FeatureFrame& current) {
  if (current.index != 0) throw ArgumentError("memory window: current frame index must be 0");
  const std::size_t d = current.feature.size();
  if (d == 0) throw DimensionError("memory window: empty feature");
  const std::size_t lm = memory.size();
  Tensor features = Tensor::matrix(lm + 1, d);
  for (std::size_t r = 0; r < lm; ++r) {
    const auto& f = memory[r];
    if (f.index != static_cast<int>(r) - static_cast<int>(lm)) {
      throw ArgumentError("memory window: frame indices must run contiguously from -L_m to -1");
    }
    if (f.feature.size() != d) throw DimensionError("memory window: feature dimension changes within window");
    std::copy(f.feature.begin(), f.feature.end(), features.row(r).begin());
  }
  std::copy(current.feature.begin(), current.feature.end(), features.row(lm).begin());
  return MemoryWindow(std::move(features), std::vector<std::uint8_t>(lm + 1, 1));
}

MemoryWindow MemoryWindow::from_sequence(const Tensor& features, std::size_t t, std::size_t memory_length) {
  if (t >= features.rows()) throw ArgumentError("memory window: position past end of sequence");
  const std::size_t d = features.cols();
  Tensor window = Tensor::matrix(memory_length + 1, d);
  std::vector<std::uint8_t> valid(memory_length + 1, 0);
  for (std::size_t r = 0; r <= memory_length; ++r) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(memory_length - r);
    if (src < 0) continue;
    const auto row = features.row(static_cast<std::size_t>(src));
    std::copy(row.begin(), row.end(), window.row(r).begin());
    valid[r] = 1;
  }
  return MemoryWindow(std::move(window), std::move(valid));
}

std::size_t MemoryWindow::valid_memory() const noexcept {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end() - 1, std::uint8_t{1}));
}

ProjectionParams ProjectionParams::from_store(const ParamStore& store) {
  return {store.get(kProjWeight), store.get(kProjBias)};
}

void init_params(ParamStore& store, std::size_t feature_dim, std::size_t d_model, std::mt19937_64& rng) {
  store.add(kProjWeight, num::glorot_uniform(d_model, feature_dim, rng));
  store.add(kProjBias, Tensor({d_model}, 0.0));
  num::AttentionBlock::init(store, kTwaPrefix, d_model, rng);
}

std::vector<double> project(const FeatureFrame& frame, const ProjectionParams& params) {
  const std::size_t out = params.weight.rows(), in = params.weight.cols();
  if (frame.feature.size() != in || params.bias.size() != out) throw DimensionError("project: dimension mismatch");
  std::vector<double> y(out);
  for (std::size_t r = 0; r < out; ++r) {
    double s = params.bias[r];
    for (std::size_t c = 0; c < in; ++c) s += params.weight(r, c) * frame.feature[c];
    y[r] = s;
  }
  return y;
}

Var project(Tape& tape, const ParamStore& store, Var features) {
  Var w = tape.param(store, kProjWeight);
  if (features.cols() != w.cols()) throw DimensionError("project: feature width does not match projection");
  return ops::linear(features, w, tape.param(store, kProjBias));
}

CriticalFrameSet select_critical_frames(const Tensor& embeddings, std::span<const int> frame_indices,
                                        const GmmParams& gmm, int current_index) {
  const std::size_t n = embeddings.rows(), k = gmm.components();
  if (frame_indices.size() != n) throw DimensionError("select_critical_frames: index list length mismatch");
  if (embeddings.cols() != gmm.dim()) throw DimensionError("select_critical_frames: embedding width mismatch");
  if (k > n) throw ArgumentError("select_critical_frames: more components than candidate frames");

  std::vector<std::uint8_t> taken(n, 0);
  std::vector<std::pair<int, int>> picked;  // (frame index, component)
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double d2 = 0.0;
      for (std::size_t j = 0; j < embeddings.cols(); ++j) {
        const double diff = embeddings(i, j) - gmm.means(c, j);
        d2 += diff * diff;
      }
      if (d2 < best_d || (d2 == best_d && best < n && frame_indices[i] > frame_indices[best])) {
        best = i;
        best_d = d2;
      }
    }
    taken[best] = 1;
    picked.emplace_back(frame_indices[best], static_cast<int>(c));
  }
  std::sort(picked.begin(), picked.end());
  CriticalFrameSet set;
  for (const auto& [idx, comp] : picked) {
    set.indices.push_back(idx);
    set.cluster.push_back(comp);
  }
  set.indices.push_back(current_index);
  set.cluster.push_back(-1);
  return set;
}

double temporal_logit_bias(int anchor_index, int frame_index, double delta) {
  if (!(delta > 0.0)) throw ArgumentError("temporal_logit_bias: delta must be positive");
  const double dt = std::abs(static_cast<double>(anchor_index) - static_cast<double>(frame_index));
  return -(dt * dt) / (2.0 * delta * delta);
}

CompressedWindow compress_to_states(Tape& tape, const ParamStore& store, Var embeddings, const MemoryWindow& window,
                                    const CriticalFrameSet& critical, double delta, std::size_t heads) {
  if (embeddings.rows() != window.rows()) throw DimensionError("compress_to_states: embeddings do not match window");
  std::vector<std::size_t> rows;
  rows.reserve(critical.indices.size());
  for (int idx : critical.indices) {
    if (idx > 0 || idx < -static_cast<int>(window.memory_length())) {
      throw ArgumentError("compress_to_states: critical index outside window");
    }
    rows.push_back(window.row_of(idx));
  }
  Tensor bias = Tensor::matrix(rows.size(), window.rows());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < window.rows(); ++j)
      bias(i, j) = temporal_logit_bias(critical.indices[i], window.frame_index(j), delta);

  const num::AttentionBlock block{kTwaPrefix, heads};
  auto out = block.forward(tape, store, ops::gather_rows(embeddings, rows), embeddings,
                           tape.constant(std::move(bias)), window.valid());
  return {out.output, std::move(out.head_weights)};
}

std::vector<CriticalState> to_states(const CompressedWindow& compressed, const CriticalFrameSet& critical) {
  const auto& s = compressed.states.value();
  std::vector<CriticalState> out;
  for (std::size_t i = 0; i < critical.indices.size(); ++i) {
    out.push_back({critical.indices[i], std::vector<double>(s.row(i).begin(), s.row(i).end())});
  }
  return out;
}

CsmcOutput compress_window(Tape& tape, const ParamStore& store, const MemoryWindow& window, const CsmcConfig& config,
                           EmWarmStart* warm) {
  CsmcOutput out;
  out.embeddings = project(tape, store, tape.constant(window.features()));
  const std::size_t k = config.clusters;
  const std::size_t lm = window.memory_length();
  const std::size_t m = window.valid_memory();
  const std::size_t first = lm - m;  // first valid memory row

  if (m > k) {
    const auto& emb = out.embeddings.value();
    Tensor memory = Tensor::matrix(m, emb.cols());
    std::vector<int> indices(m);
    for (std::size_t r = 0; r < m; ++r) {
      const auto src = emb.row(first + r);
      std::copy(src.begin(), src.end(), memory.row(r).begin());
      indices[r] = window.frame_index(first + r);
    }
    GmmOptions options;
    options.components = k;
    options.seed = config.em_seed;
    options.max_iters = config.em_max_iters;
    options.tol = config.em_tol;
    const GmmParams* init = (warm && warm->previous) ? &*warm->previous : nullptr;
    GmmFit fit = fit_gmm(memory, options, init);
    out.em_iterations = fit.iterations;
    out.critical = select_critical_frames(memory, indices, fit.params, 0);
    if (warm) warm->previous = std::move(fit.params);
  } else {
    for (std::size_t r = first; r < lm; ++r) {
      out.critical.indices.push_back(window.frame_index(r));
      out.critical.cluster.push_back(static_cast<int>(r - first));
    }
    const int oldest = m > 0 ? window.frame_index(first) : 0;
    while (out.critical.indices.size() < k) {
      out.critical.indices.insert(out.critical.indices.begin(), oldest);
      out.critical.cluster.insert(out.critical.cluster.begin(), -1);
    }
    out.critical.indices.push_back(0);
    out.critical.cluster.push_back(-1);
  }
  out.compressed = compress_to_states(tape, store, out.embeddings, window, out.critical, config.delta, config.heads);
  return out;
}

}  // namespace ssm::csmc
