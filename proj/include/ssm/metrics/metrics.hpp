#pragma once

#include <vector>

#include "ssm/numerics/tensor.hpp"

namespace ssm::metrics {

// Per-frame scores over C + 1 classes (column 0 = background) and the true
// class of each frame.
struct ScoredFrames {
  num::Tensor scores;
  std::vector<int> labels;

  void validate() const;
};

// Mean over non-background classes with at least one positive of
//   AP_c = sum_k Precision(k) [frame k positive] / N_pos(c),
// frames ranked by score descending, ties by frame index ascending.
double per_frame_map(const ScoredFrames& data);

// As per_frame_map with calibrated precision w TP / (w TP + FP),
// w = N_neg(c) / N_pos(c).
double calibrated_map(const ScoredFrames& data);

// Per-class AP values (NaN for classes without positives), index = class.
std::vector<double> per_class_ap(const ScoredFrames& data, bool calibrated);

// Mean over classes present in the labels of the fraction of their frames
// whose label is among the top min(5, C + 1) scores (ties by class index).
double class_mean_top5_recall(const ScoredFrames& data);

double accuracy(const ScoredFrames& data);

}  // namespace ssm::metrics
