#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssm/csmc/gmm.hpp"
#include "ssm/numerics/attention.hpp"

namespace ssm::csmc {

struct FeatureFrame {
  int index = 0;  // 0 = current frame, negative = past
  std::vector<double> feature;
};

// L_m memory frames followed by the current frame. Row r of `features`
// holds frame index r - L_m. Rows whose `valid` flag is 0 are cold-start
// padding (zeros) and never attended to.
class MemoryWindow {
 public:
  MemoryWindow(num::Tensor features, std::vector<std::uint8_t> valid);

  // Memory frames must carry contiguous indices -L_m..-1, current index 0.
  static MemoryWindow from_frames(std::span<const FeatureFrame> memory, const FeatureFrame& current);
  // Window ending at row `t` of an episode feature matrix, zero-padded
  // before the episode start.
  static MemoryWindow from_sequence(const num::Tensor& features, std::size_t t, std::size_t memory_length);

  std::size_t memory_length() const noexcept { return features_.rows() - 1; }
  std::size_t rows() const noexcept { return features_.rows(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  int frame_index(std::size_t row) const noexcept { return static_cast<int>(row) - static_cast<int>(memory_length()); }
  std::size_t row_of(int frame_index) const noexcept {
    return static_cast<std::size_t>(frame_index + static_cast<int>(memory_length()));
  }
  std::size_t valid_memory() const noexcept;

  const num::Tensor& features() const noexcept { return features_; }
  const std::vector<std::uint8_t>& valid() const noexcept { return valid_; }

 private:
  num::Tensor features_;
  std::vector<std::uint8_t> valid_;
};

struct ProjectionParams {
  num::Tensor weight;  // d_model x D
  num::Tensor bias;    // d_model

  static ProjectionParams from_store(const num::ParamStore& store);
};

inline const std::string kProjWeight = "proj.weight";
inline const std::string kProjBias = "proj.bias";
inline const std::string kTwaPrefix = "twa";

void init_params(num::ParamStore& store, std::size_t feature_dim, std::size_t d_model, std::mt19937_64& rng);

std::vector<double> project(const FeatureFrame& frame, const ProjectionParams& params);
// Row-wise projection of a feature matrix on a tape.
num::Var project(num::Tape& tape, const num::ParamStore& store, num::Var features);

struct CriticalFrameSet {
  std::vector<int> indices;  // ascending, last entry is the current frame 0
  std::vector<int> cluster;  // component per entry, -1 for the current frame or padding
};

// Nearest memory frame to each component mean (ties go to the more recent
// frame). A frame already taken by an earlier component is skipped so the
// K + 1 indices stay unique.
CriticalFrameSet select_critical_frames(const num::Tensor& embeddings, std::span<const int> frame_indices,
                                        const GmmParams& gmm, int current_index = 0);

// Gaussian temporal kernel as an additive logit: -(dt^2) / (2 delta^2).
double temporal_logit_bias(int anchor_index, int frame_index, double delta);

struct CriticalState {
  int anchor_index = 0;
  std::vector<double> vector;
};

struct CompressedWindow {
  num::Var states;                     // (K + 1) x d_model
  std::vector<num::Var> head_weights;  // per head, (K + 1) x (L_m + 1)
};

// Temporal weighted attention: each critical frame queries every valid frame
// of the window with logits biased by temporal_logit_bias.
CompressedWindow compress_to_states(num::Tape& tape, const num::ParamStore& store, num::Var embeddings,
                                    const MemoryWindow& window, const CriticalFrameSet& critical, double delta,
                                    std::size_t heads);

std::vector<CriticalState> to_states(const CompressedWindow& compressed, const CriticalFrameSet& critical);

struct CsmcConfig {
  std::size_t clusters = 4;
  double delta = 8.0;
  std::size_t heads = 4;
  std::size_t em_max_iters = 50;
  double em_tol = 1e-6;
  std::uint64_t em_seed = 0;
};

// Per-stream EM state: the previous window's mixture seeds the next fit.
struct EmWarmStart {
  std::optional<GmmParams> previous;
};

struct CsmcOutput {
  CriticalFrameSet critical;
  CompressedWindow compressed;
  num::Var embeddings;  // (L_m + 1) x d_model
  std::size_t em_iterations = 0;
};

// Full compression of one window: project, cluster the valid memory frames,
// pick critical frames and run temporal weighted attention. With fewer valid
// memory frames than clusters (cold start) every valid frame is kept and the
// set is front-padded by repeating its oldest entry so K + 1 states remain.
CsmcOutput compress_window(num::Tape& tape, const num::ParamStore& store, const MemoryWindow& window,
                           const CsmcConfig& config, EmWarmStart* warm = nullptr);

}  // namespace ssm::csmc
