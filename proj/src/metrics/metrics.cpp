#include "ssm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssm/errors.hpp"

namespace ssm::metrics {

void ScoredFrames::validate() const {
  if (labels.empty()) throw ArgumentError("metrics: no frames");
  if (scores.rows() != labels.size()) throw DimensionError("metrics: score rows and labels differ in count");
  if (!scores.all_finite()) throw NumericError("metrics: non-finite scores");
  const int classes = static_cast<int>(scores.cols());
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ArgumentError("metrics: label outside [0, C]");
  }
}

std::vector<double> per_class_ap(const ScoredFrames& data, bool calibrated) {
  data.validate();
  const std::size_t n = data.labels.size(), classes = data.scores.cols();
  std::vector<double> ap(classes, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> order(n);
  for (std::size_t c = 1; c < classes; ++c) {
    const auto positives = static_cast<std::size_t>(
        std::count(data.labels.begin(), data.labels.end(), static_cast<int>(c)));
    if (positives == 0) continue;
    const double w = static_cast<double>(n - positives) / static_cast<double>(positives);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.scores(a, c) > data.scores(b, c); });
    double tp = 0.0, fp = 0.0, sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (data.labels[order[k]] == static_cast<int>(c)) {
        tp += 1.0;
        sum += calibrated ? w * tp / (w * tp + fp) : tp / (tp + fp);
      } else {
        fp += 1.0;
      }
    }
    ap[c] = sum / static_cast<double>(positives);
  }
  return ap;
}

namespace {

double mean_defined(const std::vector<double>& ap) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : ap) {
    if (std::isnan(v)) continue;
    sum += v;
    ++count;
  }
  if (count == 0) throw ArgumentError("metrics: no non-background positives; mAP undefined");
  return sum / static_cast<double>(count);
}

}  // namespace

double per_frame_map(const ScoredFrames& data) { return mean_defined(per_class_ap(data, false)); }

double calibrated_map(const ScoredFrames& data) { return mean_defined(per_class_ap(data, true)); }

double class_mean_top5_recall(const ScoredFrames& data) {
  data.validate();
  const std::size_t classes = data.scores.cols();
  const std::size_t top = std::min<std::size_t>(5, classes);
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  std::vector<std::size_t> order(classes);
  for (std::size_t t = 0; t < data.labels.size(); ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.scores(t, a) > data.scores(t, b); });
    const auto y = static_cast<std::size_t>(data.labels[t]);
    ++totals[y];
    if (std::find(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), y) !=
        order.begin() + static_cast<std::ptrdiff_t>(top)) {
      ++hits[y];
    }
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] == 0) continue;
    sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    ++present;
  }
  return sum / static_cast<double>(present);
}

double accuracy(const ScoredFrames& data) {
  data.validate();
  std::size_t hit = 0;
  for (std::size_t t = 0; t < data.labels.size(); ++t) {
    const auto row = data.scores.row(t);
    hit += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == data.labels[t];
  }
  return static_cast<double>(hit) / static_cast<double>(data.labels.size());
}

}  // namespace ssm::metrics
