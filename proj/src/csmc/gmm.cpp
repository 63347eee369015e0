#include "ssm/csmc/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ssm/errors.hpp"

namespace ssm::csmc {

using num::Tensor;

void GmmParams::validate(double variance_floor) const {
  const std::size_t k = components();
  if (k == 0) throw ArgumentError("gmm: no components");
  if (means.rows() != k || variances.rows() != k || variances.cols() != means.cols()) {
    throw ArgumentError("gmm: parameter shapes disagree");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= kMinComponentWeight)) throw ArgumentError("gmm: mixture weight below floor");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("gmm: mixture weights do not sum to one");
  for (double v : variances.data()) {
    if (!(v >= variance_floor)) throw ArgumentError("gmm: variance below floor");
  }
}

double log_gaussian(std::span<const double> x, std::span<const double> mean, std::span<const double> var) {
  constexpr double log_two_pi = 1.8378770664093453;  // ln(2 pi)
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mean[d];
    s += log_two_pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * s;
}

namespace {

// Per-point log-likelihood and normalised responsibilities.
double e_step(const GmmParams& gmm, const Tensor& x, Tensor& resp, std::vector<double>& point_ll) {
  const std::size_t n = x.rows(), k = gmm.components();
  resp = Tensor::matrix(n, k);
  point_ll.assign(n, 0.0);
  const std::size_t d = x.cols();
  constexpr double log_two_pi = 1.8378770664093453;
  // log w_c - 0.5 (d ln 2pi + sum ln var), plus inverse variances.
  std::vector<double> offset(k);
  Tensor inv_var = Tensor::matrix(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    double s = static_cast<double>(d) * log_two_pi;
    for (std::size_t j = 0; j < d; ++j) {
      s += std::log(gmm.variances(c, j));
      inv_var(c, j) = 1.0 / gmm.variances(c, j);
    }
    offset[c] = std::log(gmm.weights[c]) - 0.5 * s;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    const double* xi = x.row(i).data();
    for (std::size_t c = 0; c < k; ++c) {
      const double* mu = gmm.means.row(c).data();
      const double* iv = inv_var.row(c).data();
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = xi[j] - mu[j];
        q += diff * diff * iv[j];
      }
      resp(i, c) = offset[c] - 0.5 * q;
      mx = std::max(mx, resp(i, c));
    }
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(resp(i, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c) resp(i, c) = std::exp(resp(i, c) - lse);
    point_ll[i] = lse;
    total += lse;
  }
  if (!std::isfinite(total)) throw NumericError("gmm: non-finite log-likelihood");
  return total;
}

std::vector<double> global_variance(const Tensor& x, double floor) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
  for (auto& v : var) v = std::max(v / static_cast<double>(n), floor);
  return var;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

GmmParams seed_kmeanspp(const Tensor& x, std::size_t k, std::uint64_t seed, double floor) {
  const std::size_t n = x.rows(), d = x.cols();
  std::mt19937_64 rng(seed);
  GmmParams gmm;
  gmm.weights.assign(k, 1.0 / static_cast<double>(k));
  gmm.means = Tensor::matrix(k, d);
  gmm.variances = Tensor::matrix(k, d);
  const auto var = global_variance(x, floor);

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : nearest) total += v;
      if (total > 0.0) {
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          if (u < nearest[i]) {
            pick = i;
            break;
          }
          u -= nearest[i];
        }
      } else {
        // Every point coincides with a chosen centre.
        pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      }
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), gmm.means.row(c).begin());
    std::copy(var.begin(), var.end(), gmm.variances.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(x.row(i), gmm.means.row(c)));
  }
  return gmm;
}

}  // namespace

double posteriors(const GmmParams& gmm, const Tensor& x, Tensor& responsibilities) {
  if (x.cols() != gmm.dim()) throw DimensionError("gmm: data width does not match component width");
  std::vector<double> point_ll;
  return e_step(gmm, x, responsibilities, point_ll);
}

GmmFit fit_gmm(const Tensor& x, const GmmOptions& options, const GmmParams* warm_start) {
  const std::size_t n = x.rows(), d = x.cols(), k = options.components;
  if (k == 0) throw ArgumentError("fit_gmm: component count must be positive");
  if (k > n) throw ArgumentError("fit_gmm: more components than points");
  if (!(options.tol > 0.0)) throw ArgumentError("fit_gmm: tol must be positive");
  if (!x.all_finite()) throw NumericError("fit_gmm: non-finite data");

  GmmFit fit;
  if (warm_start) {
    if (warm_start->components() != k || warm_start->dim() != d) {
      throw ArgumentError("fit_gmm: warm start shape does not match");
    }
    fit.params = *warm_start;
  } else {
    fit.params = seed_kmeanspp(x, k, options.seed, options.variance_floor);
  }
  const auto data_var = global_variance(x, options.variance_floor);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> point_ll;
  bool reseeded = false;
  for (;;) {
    fit.log_likelihood = e_step(fit.params, x, fit.responsibilities, point_ll);
    fit.history.push_back(fit.log_likelihood);
    const std::size_t h = fit.history.size();
    // A reseed restarts the ascent, so its step is not a convergence signal.
    if (h >= 2 && !reseeded && (fit.history[h - 1] - fit.history[h - 2]) * inv_n < options.tol) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= options.max_iters) break;

    // M-step.
    auto& gmm = fit.params;
    reseeded = false;
    for (std::size_t c = 0; c < k; ++c) {
      double mass = 0.0;
      for (std::size_t i = 0; i < n; ++i) mass += fit.responsibilities(i, c);
      if (mass * inv_n < kMinComponentWeight) {
        // Empty component: restart it on the worst-explained point.
        const auto worst = static_cast<std::size_t>(
            std::min_element(point_ll.begin(), point_ll.end()) - point_ll.begin());
        std::copy(x.row(worst).begin(), x.row(worst).end(), gmm.means.row(c).begin());
        std::copy(data_var.begin(), data_var.end(), gmm.variances.row(c).begin());
        gmm.weights[c] = 1.0 / static_cast<double>(k);
        point_ll[worst] = std::numeric_limits<double>::infinity();
        reseeded = true;
        continue;
      }
      double* mean = gmm.means.row(c).data();
      double* var = gmm.variances.row(c).data();
      std::fill(mean, mean + d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = fit.responsibilities(i, c);
        const double* xi = x.row(i).data();
        for (std::size_t j = 0; j < d; ++j) mean[j] += r * xi[j];
      }
      for (std::size_t j = 0; j < d; ++j) mean[j] /= mass;
      std::fill(var, var + d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = fit.responsibilities(i, c);
        const double* xi = x.row(i).data();
        for (std::size_t j = 0; j < d; ++j) var[j] += r * (xi[j] - mean[j]) * (xi[j] - mean[j]);
      }
      for (std::size_t j = 0; j < d; ++j) var[j] = std::max(var[j] / mass, options.variance_floor);
      gmm.weights[c] = mass * inv_n;
    }
    double total = 0.0;
    for (double w : gmm.weights) total += w;
    for (auto& w : gmm.weights) w /= total;
    if (reseeded) fit.reseed_iterations.push_back(fit.iterations);
    ++fit.iterations;
  }
  return fit;
}

}  // namespace ssm::csmc
