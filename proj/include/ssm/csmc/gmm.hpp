#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssm/numerics/tensor.hpp"

namespace ssm::csmc {

// Diagonal-covariance Gaussian mixture.
struct GmmParams {
  std::vector<double> weights;  // K, sums to one
  num::Tensor means;            // K x d
  num::Tensor variances;        // K x d, every entry >= variance floor

  std::size_t components() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return means.cols(); }
  // Throws ArgumentError when the simplex, floor or shape invariants fail.
  void validate(double variance_floor = 1e-6) const;
};

struct GmmOptions {
  std::size_t components = 4;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  // Convergence threshold on the gain of the mean per-point log-likelihood.
  double tol = 1e-6;
  double variance_floor = 1e-6;
};

struct GmmFit {
  GmmParams params;
  num::Tensor responsibilities;  // N x K, rows sum to one
  double log_likelihood = 0.0;   // total over points, under `params`
  std::vector<double> history;   // log-likelihood before each M-step, then the final one
  std::vector<std::size_t> reseed_iterations;
  std::size_t iterations = 0;
  bool converged = false;
};

inline constexpr double kMinComponentWeight = 1e-8;

// log N(x | mu_k, diag(var_k)).
double log_gaussian(std::span<const double> x, std::span<const double> mean, std::span<const double> var);

// Posterior p(k | x_i) for every row of x. Returns the total log-likelihood.
double posteriors(const GmmParams& gmm, const num::Tensor& x, num::Tensor& responsibilities);

// EM fit. With `warm_start` the iteration starts from those parameters;
// otherwise means are seeded k-means++ style from `options.seed`.
GmmFit fit_gmm(const num::Tensor& x, const GmmOptions& options, const GmmParams* warm_start = nullptr);

}  // namespace ssm::csmc
