#pragma once

#include <deque>
#include <span>
#include <vector>

#include "ssm/harness/checkpoint.hpp"
#include "ssm/harness/model.hpp"

namespace ssm::harness {

struct PredictionPair {
  std::vector<double> p_d;
  std::vector<double> p_a;
};

// Online inference over one stream. Keeps the last L_m + 1 frames and the
// EM warm-start state; each push sees only frames already pushed.
class Streamer {
 public:
  Streamer(const RunConfig& config, const num::ParamStore& params);
  explicit Streamer(const Checkpoint& checkpoint) : Streamer(checkpoint.config, checkpoint.params) {}

  PredictionPair push(std::span<const double> frame);
  std::size_t frames_seen() const noexcept { return seen_; }
  // Window ending at the most recent frame, zero-padded while cold.
  csmc::MemoryWindow window() const;

 private:
  SsmModel model_;
  const num::ParamStore* params_;
  std::deque<std::vector<double>> buffer_;
  csmc::EmWarmStart warm_;
  std::size_t seen_ = 0;
};

struct StreamOutputs {
  num::Tensor p_d;  // n x (C + 1)
  num::Tensor p_a;
};

// Streams every row of `features` through a fresh Streamer.
StreamOutputs stream_infer(const RunConfig& config, const num::ParamStore& params, const num::Tensor& features);

struct AttentionRow {
  int anchor_index = 0;
  int frame_index = 0;
  double weight = 0.0;
};

// Head-averaged temporal weighted attention for the window ending at frame
// t, one row per (critical anchor, valid frame). EM runs cold with the
// config seed.
std::vector<AttentionRow> dump_attention(const RunConfig& config, const num::ParamStore& params,
                                         const num::Tensor& features, std::size_t t);

}  // namespace ssm::harness
