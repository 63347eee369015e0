#include "ssm/harness/stream.hpp"

#include "ssm/errors.hpp"

namespace ssm::harness {

using num::Tensor;

Streamer::Streamer(const RunConfig& config, const num::ParamStore& params) : model_(config), params_(&params) {}

csmc::MemoryWindow Streamer::window() const {
  const std::size_t lm = model_.config().memory_length, d = model_.config().feature_dim;
  Tensor features = Tensor::matrix(lm + 1, d);
  std::vector<std::uint8_t> valid(lm + 1, 0);
  const std::size_t first = lm + 1 - buffer_.size();
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    std::copy(buffer_[i].begin(), buffer_[i].end(), features.row(first + i).begin());
    valid[first + i] = 1;
  }
  return csmc::MemoryWindow(std::move(features), std::move(valid));
}

PredictionPair Streamer::push(std::span<const double> frame) {
  const auto& config = model_.config();
  if (frame.size() != config.feature_dim) {
    throw DimensionError("stream: frame has " + std::to_string(frame.size()) + " values, checkpoint expects " +
                         std::to_string(config.feature_dim));
  }
  buffer_.emplace_back(frame.begin(), frame.end());
  if (buffer_.size() > config.memory_length + 1) buffer_.pop_front();
  ++seen_;

  num::Tape tape;
  const auto out = model_.forward(tape, *params_, window(), &warm_);
  return {out.p_d.value().data(), out.p_a.value().data()};
}

StreamOutputs stream_infer(const RunConfig& config, const num::ParamStore& params, const Tensor& features) {
  Streamer streamer(config, params);
  const std::size_t n = features.rows(), classes = config.classes + 1;
  StreamOutputs out{Tensor::matrix(n, classes), Tensor::matrix(n, classes)};
  for (std::size_t t = 0; t < n; ++t) {
    const auto pair = streamer.push(features.row(t));
    std::copy(pair.p_d.begin(), pair.p_d.end(), out.p_d.row(t).begin());
    std::copy(pair.p_a.begin(), pair.p_a.end(), out.p_a.row(t).begin());
  }
  return out;
}

std::vector<AttentionRow> dump_attention(const RunConfig& config, const num::ParamStore& params,
                                         const Tensor& features, std::size_t t) {
  if (t >= features.rows()) throw ArgumentError("dump-attention: frame index past the end of the sequence");
  if (features.cols() != config.feature_dim) throw DimensionError("dump-attention: feature width mismatch");
  const SsmModel model(config);
  const auto window = csmc::MemoryWindow::from_sequence(features, t, config.memory_length);
  num::Tape tape;
  const auto out = model.forward(tape, params, window);
  const auto& heads = out.csmc.compressed.head_weights;
  const auto& anchors = out.csmc.critical.indices;
  std::vector<AttentionRow> rows;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (std::size_t r = 0; r < window.rows(); ++r) {
      if (!window.valid()[r]) continue;
      double w = 0.0;
      for (const auto& h : heads) w += h.value()(a, r);
      rows.push_back({anchors[a], window.frame_index(r), w / static_cast<double>(heads.size())});
    }
  }
  return rows;
}

}  // namespace ssm::harness
