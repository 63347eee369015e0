#pragma once

#include <random>
#include <vector>

#include "ssm/numerics/tensor.hpp"

namespace ssm::test {

inline num::Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  num::Tensor t = num::Tensor::matrix(rows, cols);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline double max_abs_diff(const num::Tensor& a, const num::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Naive reference for a row-major matrix product.
inline std::vector<std::vector<double>> matmul_ref(const std::vector<std::vector<double>>& a,
                                                   const std::vector<std::vector<double>>& b) {
  std::vector<std::vector<double>> c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

}  // namespace ssm::test
