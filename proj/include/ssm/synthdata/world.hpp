#pragma once

#include <cstdint>
#include <vector>

#include "ssm/numerics/tensor.hpp"

namespace ssm::synth {

// Hidden Markov action world. Class 0 is background; frames are the class
// centroid plus isotropic Gaussian noise.
struct WorldSpec {
  std::size_t classes = 6;  // action classes, excluding background
  num::Tensor transition;   // (C + 1) x (C + 1), row-stochastic
  num::Tensor centroids;    // (C + 1) x D
  double sigma = 1.0;
  double fps = 4.0;

  std::size_t states() const noexcept { return classes + 1; }
  std::size_t feature_dim() const noexcept { return centroids.cols(); }
  // Anticipation horizon in frames for a one-second gap.
  std::size_t default_horizon() const;
  void validate() const;
};

struct Episode {
  num::Tensor features;    // n x D
  std::vector<int> y_d;    // current class per frame, empty when unlabeled
  std::vector<int> y_a;    // class at t + horizon, -1 past the end
  std::size_t horizon = 4;
  double fps = 4.0;

  std::size_t length() const noexcept { return features.rows(); }
  bool has_labels() const noexcept { return !y_d.empty(); }
};

struct WorldOptions {
  std::size_t classes = 6;
  std::size_t feature_dim = 16;
  double fps = 4.0;
  double stay_probability = 0.9;
  // Probability that an action hands over to the next action in the cycle.
  double successor_probability = 0.06;
  double background_stay = 0.85;
  double target_nearest_centroid_accuracy = 0.8;
};

// Random centroids, cyclic action successor structure, and sigma calibrated
// so that nearest-centroid accuracy under the stationary class mix is close
// to the target.
WorldSpec make_world(const WorldOptions& options, std::uint64_t seed);
WorldSpec default_world(std::uint64_t seed = 7);

std::vector<double> stationary_distribution(const num::Tensor& transition);

// horizon == 0 selects spec.default_horizon().
Episode generate_episode(const WorldSpec& spec, std::size_t length, std::uint64_t seed, std::size_t horizon = 0);

struct OraclePosteriors {
  num::Tensor detection;     // n x (C + 1)
  num::Tensor anticipation;  // n x (C + 1)
};

// Exact forward filtering with the generating parameters; the anticipation
// posterior pushes the filtered belief `horizon` steps through T.
OraclePosteriors bayes_oracle(const WorldSpec& spec, const num::Tensor& features, std::size_t horizon);

std::vector<int> nearest_centroid(const WorldSpec& spec, const num::Tensor& features);

// Fraction of frames whose argmax matches the label; labels < 0 are skipped.
double argmax_accuracy(const num::Tensor& scores, const std::vector<int>& labels);

}  // namespace ssm::synth
