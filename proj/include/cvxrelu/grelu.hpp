#pragma once

#include <Eigen/Dense>

#include <iostream>
#include <utility>

#include "cvxrelu/dataset.hpp"
#include "cvxrelu/expanded_operator.hpp"
#include "cvxrelu/fista.hpp"
#include "cvxrelu/patterns.hpp"

namespace cvxrelu {

/// Per-pattern weight blocks u_i of the unconstrained gated problem.
using GReLUWeights = BlockWeights;

/// Smooth part of the gated objective: 0.5 ||sum_i D_i X u_i - Y||_F^2
/// normalized by n * c so the regularization strength has a consistent scale
/// across problem sizes and class counts.
inline SmoothEval make_grelu_smooth(const PatternSet& patterns, const Eigen::MatrixXd& X,
                                    const Eigen::MatrixXd& Y) {
  const double normalizer = static_cast<double>(Y.rows()) * static_cast<double>(Y.cols());
  return [&patterns, &X, &Y, normalizer](const BlockWeights& u, BlockWeights* grad) {
    const Eigen::MatrixXd residual = apply_expanded(patterns, X, u) - Y;
    if (grad) {
      *grad = apply_expanded_adjoint(patterns, X, residual);
      grad->mat /= normalizer;
    }
    return 0.5 * residual.squaredNorm() / normalizer;
  };
}

/// Full gated objective: normalized squared loss plus lambda times the sum of
/// block norms (Frobenius norms when c > 1).
inline double grelu_objective(const GReLUWeights& u, const PatternSet& patterns,
                              const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                              double lambda) {
  const double normalizer = static_cast<double>(Y.rows()) * static_cast<double>(Y.cols());
  const double loss = 0.5 * (apply_expanded(patterns, X, u) - Y).squaredNorm() / normalizer;
  return loss + lambda * u.group_norm();
}

/// Solves the unconstrained gated problem with the configured variant,
/// starting from zero unless a warm start is supplied. Expects
/// column-normalized features and warns once when they are not; thresholding
/// is sensitive to gradient conditioning.
inline std::pair<GReLUWeights, SolverReport> solve_grelu(
    const Dataset& data, const PatternSet& patterns, const GReLUConfig& config,
    const GReLUWeights* warm_start = nullptr) {
  require(patterns.n() == data.n(), "solve_grelu: pattern length != examples");
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    const double norm = data.features.col(j).norm();
    if (norm > 0.0 && std::abs(norm - 1.0) > 1e-6) {
      std::cerr << "solve_grelu: warning: feature columns are not unit-normalized; "
                   "consider normalize_columns first\n";
      break;
    }
  }
  const SmoothEval smooth = make_grelu_smooth(patterns, data.features, data.targets);
  SolveExtras extras;
  extras.warm_start = warm_start;
  return solve_composite(smooth, data.dim(), patterns.size(), data.classes(), config,
                         extras);
}

}  // namespace cvxrelu
