#pragma once

#include <Eigen/Dense>

#include <random>
#include <stdexcept>
#include <string>

namespace cvxrelu {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline bool all_finite(const Eigen::MatrixXd& m) {
  return m.allFinite();
}

/// Standard-normal matrix drawn from an explicit engine so every sampling
/// path in the library is reproducible from a single seed.
inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index size, std::mt19937_64& rng) {
  return gaussian_matrix(size, 1, rng);
}

}  // namespace cvxrelu
