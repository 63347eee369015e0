#include "ssm/synthdata/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ssm/errors.hpp"

namespace ssm::synth {

using num::Tensor;

std::size_t WorldSpec::default_horizon() const {
  return static_cast<std::size_t>(std::lround(fps * 1.0));
}

void WorldSpec::validate() const {
  const std::size_t s = states();
  if (transition.rows() != s || transition.cols() != s) throw ArgumentError("world: transition must be (C+1)x(C+1)");
  if (centroids.rows() != s) throw ArgumentError("world: need one centroid per class");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("world: sigma must be positive");
  if (!(fps > 0.0)) throw ArgumentError("world: fps must be positive");
  for (std::size_t r = 0; r < s; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < s; ++c) {
      if (transition(r, c) < 0.0) throw ArgumentError("world: negative transition probability");
      total += transition(r, c);
    }
    if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("world: transition rows must sum to one");
  }
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = a + 1; b < s; ++b)
      if (std::equal(centroids.row(a).begin(), centroids.row(a).end(), centroids.row(b).begin())) {
        throw ArgumentError("world: centroids must be pairwise distinct");
      }
}

std::vector<double> stationary_distribution(const Tensor& transition) {
  const std::size_t s = transition.rows();
  std::vector<double> pi(s, 1.0 / static_cast<double>(s)), next(s);
  for (int it = 0; it < 100000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) next[j] += pi[i] * transition(i, j);
    double diff = 0.0;
    for (std::size_t j = 0; j < s; ++j) diff += std::abs(next[j] - pi[j]);
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

namespace {

std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return probs.size() - 1;
}

std::size_t nearest(const Tensor& centroids, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.rows(); ++k) {
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - centroids(k, j)) * (x[j] - centroids(k, j));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

WorldSpec make_world(const WorldOptions& options, std::uint64_t seed) {
  const std::size_t s = options.classes + 1, d = options.feature_dim;
  if (options.classes < 1 || d < 1) throw ArgumentError("world: need at least one action class and feature");
  WorldSpec spec;
  spec.classes = options.classes;
  spec.fps = options.fps;
  spec.transition = Tensor::matrix(s, s);
  spec.transition(0, 0) = options.background_stay;
  for (std::size_t c = 1; c < s; ++c) spec.transition(0, c) = (1.0 - options.background_stay) / options.classes;
  for (std::size_t c = 1; c < s; ++c) {
    const std::size_t successor = c % options.classes + 1;
    const double leave_to_bg = 1.0 - options.stay_probability - options.successor_probability;
    if (leave_to_bg < 0.0) throw ArgumentError("world: stay + successor probability exceeds one");
    spec.transition(c, c) += options.stay_probability;
    spec.transition(c, successor) += options.successor_probability;
    spec.transition(c, 0) += leave_to_bg;
  }
  for (std::size_t r = 0; r < s; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < s; ++c) total += spec.transition(r, c);
    for (std::size_t c = 0; c < s; ++c) spec.transition(r, c) /= total;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  spec.centroids = Tensor::matrix(s, d);
  for (auto& v : spec.centroids.data()) v = normal(rng);

  // Common random numbers make the accuracy monotone in sigma, so bisection
  // on a fixed sample is well defined.
  const auto pi = stationary_distribution(spec.transition);
  constexpr std::size_t samples = 20000;
  std::vector<std::size_t> cls(samples);
  Tensor noise = Tensor::matrix(samples, d);
  for (std::size_t i = 0; i < samples; ++i) {
    cls[i] = sample_categorical(pi, rng);
    for (std::size_t j = 0; j < d; ++j) noise(i, j) = normal(rng);
  }
  auto accuracy = [&](double sigma) {
    std::size_t hit = 0;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < samples; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[j] = spec.centroids(cls[i], j) + sigma * noise(i, j);
      hit += nearest(spec.centroids, x) == cls[i];
    }
    return static_cast<double>(hit) / samples;
  };
  double lo = 1e-3, hi = 10.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (accuracy(mid) > options.target_nearest_centroid_accuracy ? lo : hi) = mid;
  }
  spec.sigma = 0.5 * (lo + hi);
  spec.validate();
  return spec;
}

WorldSpec default_world(std::uint64_t seed) { return make_world(WorldOptions{}, seed); }

Episode generate_episode(const WorldSpec& spec, std::size_t length, std::uint64_t seed, std::size_t horizon) {
  spec.validate();
  if (horizon == 0) horizon = spec.default_horizon();
  if (length <= horizon) throw ArgumentError("generate_episode: length must exceed the horizon");
  const std::size_t d = spec.feature_dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto pi = stationary_distribution(spec.transition);

  Episode ep;
  ep.horizon = horizon;
  ep.fps = spec.fps;
  ep.features = Tensor::matrix(length, d);
  ep.y_d.resize(length);
  std::size_t state = sample_categorical(pi, rng);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = sample_categorical(spec.transition.row(state), rng);
    ep.y_d[t] = static_cast<int>(state);
    // Stored at f32 precision so SSMF round trips are exact.
    for (std::size_t j = 0; j < d; ++j) {
      ep.features(t, j) = static_cast<float>(spec.centroids(state, j) + spec.sigma * normal(rng));
    }
  }
  ep.y_a.assign(length, -1);
  for (std::size_t t = 0; t + horizon < length; ++t) ep.y_a[t] = ep.y_d[t + horizon];
  return ep;
}

OraclePosteriors bayes_oracle(const WorldSpec& spec, const Tensor& features, std::size_t horizon) {
  spec.validate();
  const std::size_t n = features.rows(), s = spec.states(), d = spec.feature_dim();
  if (features.cols() != d) throw DimensionError("bayes_oracle: feature width does not match the world");

  Tensor t_pow = Tensor::matrix(s, s);
  for (std::size_t i = 0; i < s; ++i) t_pow(i, i) = 1.0;
  for (std::size_t h = 0; h < horizon; ++h) {
    Tensor next = Tensor::matrix(s, s);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t k = 0; k < s; ++k)
        for (std::size_t j = 0; j < s; ++j) next(i, j) += t_pow(i, k) * spec.transition(k, j);
    t_pow = std::move(next);
  }

  OraclePosteriors out{Tensor::matrix(n, s), Tensor::matrix(n, s)};
  const auto pi = stationary_distribution(spec.transition);
  std::vector<double> prior(pi), log_post(s);
  const double inv_two_var = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      std::fill(prior.begin(), prior.end(), 0.0);
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) prior[j] += out.detection(t - 1, i) * spec.transition(i, j);
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s; ++k) {
      if (prior[k] <= 0.0) {
        log_post[k] = -std::numeric_limits<double>::infinity();
        continue;
      }
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += (features(t, j) - spec.centroids(k, j)) * (features(t, j) - spec.centroids(k, j));
      log_post[k] = std::log(prior[k]) - dist * inv_two_var;
      mx = std::max(mx, log_post[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < s; ++k) z += (out.detection(t, k) = std::isfinite(log_post[k]) ? std::exp(log_post[k] - mx) : 0.0);
    for (std::size_t k = 0; k < s; ++k) out.detection(t, k) /= z;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) out.anticipation(t, j) += out.detection(t, i) * t_pow(i, j);
  }
  return out;
}

std::vector<int> nearest_centroid(const WorldSpec& spec, const Tensor& features) {
  std::vector<int> out(features.rows());
  for (std::size_t t = 0; t < features.rows(); ++t) out[t] = static_cast<int>(nearest(spec.centroids, features.row(t)));
  return out;
}

double argmax_accuracy(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.rows() != labels.size()) throw DimensionError("argmax_accuracy: label count mismatch");
  std::size_t hit = 0, total = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0) continue;
    const auto row = scores.row(t);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hit += best == labels[t];
    ++total;
  }
  if (total == 0) throw ArgumentError("argmax_accuracy: no labelled frames");
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace ssm::synth
