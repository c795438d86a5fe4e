#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "cvxrelu/block_weights.hpp"
#include "cvxrelu/common.hpp"
#include "cvxrelu/patterns.hpp"

namespace cvxrelu {

/// Applies the expanded operator M = [D_1 X ... D_P X] without materializing
/// it: returns sum_i D_i X u_i as an n x c matrix.
inline Eigen::MatrixXd apply_expanded(const PatternSet& patterns,
                                      const Eigen::MatrixXd& X,
                                      const BlockWeights& U) {
  require(patterns.n() == X.rows(), "apply_expanded: pattern length != rows");
  require(U.dim() == X.cols(), "apply_expanded: block dimension != features");
  require(U.count() == patterns.size(), "apply_expanded: block count != pattern count");
  const Eigen::Index c = U.classes;
  const Eigen::MatrixXd z = X * U.mat;  // n x (P*c)
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), c);
  const Eigen::MatrixXd& ind = patterns.indicators();
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    for (Eigen::Index k = 0; k < c; ++k)
      out.col(k).array() += ind.col(i).array() * z.col(i * c + k).array();
  return out;
}

/// Adjoint of apply_expanded: block i of the result is X^T D_i r. This is the
/// gradient backbone for every smooth objective built on the expansion.
inline BlockWeights apply_expanded_adjoint(const PatternSet& patterns,
                                           const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& r) {
  require(patterns.n() == X.rows(), "apply_expanded_adjoint: pattern length != rows");
  require(r.rows() == X.rows(), "apply_expanded_adjoint: residual has wrong row count");
  const Eigen::Index c = r.cols();
  const Eigen::Index p = patterns.size();
  Eigen::MatrixXd masked(X.rows(), p * c);
  const Eigen::MatrixXd& ind = patterns.indicators();
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index k = 0; k < c; ++k)
      masked.col(i * c + k).array() = ind.col(i).array() * r.col(k).array();
  return BlockWeights(X.transpose() * masked, c);
}

/// Power-iteration estimate of lambda_max(M^T M) using only the matrix-free
/// forward and adjoint maps. The Rayleigh quotient is nondecreasing in the
/// iteration count up to round-off, so more iterations can only tighten the
/// estimate from below.
inline double estimate_operator_norm(const PatternSet& patterns,
                                     const Eigen::MatrixXd& X, int iters,
                                     std::uint64_t seed) {
  require(iters >= 1, "estimate_operator_norm: iters must be >= 1");
  std::mt19937_64 rng(seed);
  BlockWeights v(gaussian_matrix(X.cols(), patterns.size(), rng), 1);
  double vnorm = v.mat.norm();
  if (vnorm == 0.0) return 0.0;
  v.mat /= vnorm;
  double rayleigh = 0.0;
  for (int it = 0; it < iters; ++it) {
    const BlockWeights w = apply_expanded_adjoint(patterns, X, apply_expanded(patterns, X, v));
    rayleigh = (v.mat.array() * w.mat.array()).sum();
    const double wnorm = w.mat.norm();
    if (wnorm == 0.0) return 0.0;  // v in the null space; operator acts as zero here
    v.mat = w.mat / wnorm;
  }
  return rayleigh;
}

/// Materializes M = [D_1 X ... D_P X] densely. Intended for small problems
/// and oracles; solvers never call this.
inline Eigen::MatrixXd materialize_expanded(const PatternSet& patterns,
                                            const Eigen::MatrixXd& X) {
  const Eigen::Index d = X.cols();
  Eigen::MatrixXd m(X.rows(), patterns.size() * d);
  const Eigen::MatrixXd& ind = patterns.indicators();
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    m.middleCols(i * d, d) = ind.col(i).asDiagonal() * X;
  return m;
}

}  // namespace cvxrelu
