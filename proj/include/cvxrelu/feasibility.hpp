#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "cvxrelu/fista.hpp"
#include "cvxrelu/patterns.hpp"

namespace cvxrelu {

namespace detail {

/// Minimizes 0.5 ||(targets - A u)+||^2 with the proximal machinery (lambda
/// is 0, so this is plain gradient descent with acceleration). Returns the
/// final objective value and minimizer. A value of zero certifies a point
/// with A u >= targets.
///
/// The system A u >= targets with targets in {0, 1}^n is positively
/// homogeneous, so any iterate with strictly positive margins on the
/// target-1 rows and nonnegative margins on the target-0 rows can be scaled
/// into an exactly feasible point. That certificate short-circuits the
/// solve, which matters for narrow cones where the feasible region sits far
/// from the origin and the plain objective decays only sublinearly.
struct OneSidedFit {
  double objective;
  Eigen::VectorXd minimizer;
};

inline OneSidedFit one_sided_feasibility_fit(const Eigen::MatrixXd& A,
                                             const Eigen::VectorXd& targets,
                                             int max_iters, double stop_below) {
  const SmoothEval smooth = make_one_sided_quadratic(A, targets);
  auto scalable_certificate = [&A, &targets](const BlockWeights& u) {
    const Eigen::VectorXd margins = A * u.mat.col(0);
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
      if (targets[i] > 0.0 ? margins[i] <= 0.0 : margins[i] < 0.0) return false;
    }
    return true;
  };
  GReLUConfig config;
  config.lambda = 0.0;
  config.max_iters = max_iters;
  // Feasible systems exit through the certificate or the objective target;
  // infeasible ones run to a stationary point whose value is then read off.
  // The tight gradient tolerance keeps that readout well below the decision
  // band.
  config.grad_tol = 1e-18;
  SolveExtras extras;
  extras.objective_target = stop_below;
  extras.stop_predicate = scalable_certificate;
  auto [u, report] = solve_composite(smooth, A.cols(), 1, 1, config, extras);
  if (scalable_certificate(u)) {
    // Scale so every target-1 row clears its margin; the result is exactly
    // feasible and the objective is exactly zero.
    const Eigen::VectorXd margins = A * u.mat.col(0);
    double scale = 1.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i)
      if (targets[i] > 0.0) scale = std::max(scale, targets[i] / margins[i]);
    return {0.0, scale * u.mat.col(0)};
  }
  return {report.objective_trace.back(), u.mat.col(0)};
}

}  // namespace detail

/// Decides whether the pattern's cone has a strictly feasible point, i.e.
/// whether some u satisfies (2D - I) X u > 0. By homogeneity this is
/// equivalent to (2D - I) X u >= 1, which is settled by driving the one-sided
/// quadratic 0.5 ||(1 - (2D - I) X u)+||^2 below tol.
///
/// Practical for small n only (the callers enumerate patterns; guidance is
/// n <= 20). Throws when the budget runs out with the objective in the
/// inconclusive band (tol, 10 tol).
inline bool strict_feasibility(const ActivationPattern& pattern, const Eigen::MatrixXd& X,
                               int max_iters = 20000, double tol = 1e-10) {
  require(pattern.size() == X.rows(), "strict_feasibility: pattern length != rows");
  Eigen::MatrixXd a = X;
  const Eigen::VectorXd s = pattern.signs();
  for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j).array() *= s.array();
  const auto fit = detail::one_sided_feasibility_fit(
      a, Eigen::VectorXd::Ones(X.rows()), max_iters, tol);
  if (fit.objective <= tol) return true;
  if (fit.objective < 10.0 * tol)
    throw std::runtime_error(
        "strict_feasibility: inconclusive (objective between tol and 10*tol after " +
        std::to_string(max_iters) + " iterations)");
  return false;
}

namespace detail {

/// Checks whether mask m is realizable as diag(1(X g >= 0)) for some g:
/// feasibility of { x_i' g >= 0 on active rows, x_i' g <= -1 on inactive
/// rows } via the same one-sided quadratic. The -1 margin is w.l.o.g. by
/// homogeneity; active rows may sit exactly on their hyperplane (ties count
/// as active under >=).
inline bool mask_realizable(const ActivationPattern& mask, const Eigen::MatrixXd& X,
                            Eigen::VectorXd* witness, int max_iters = 20000,
                            double tol = 1e-10) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd a(n, X.cols());
  Eigen::VectorXd targets(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask.active(i)) {
      a.row(i) = X.row(i);
      targets[i] = 0.0;
    } else {
      a.row(i) = -X.row(i);
      targets[i] = 1.0;
    }
  }
  const auto fit = one_sided_feasibility_fit(a, targets, max_iters, tol);
  if (fit.objective > tol) return false;
  if (witness) *witness = fit.minimizer;
  return true;
}

}  // namespace detail

/// Exhaustive oracle for the set of activation patterns realizable on X,
/// zero pattern excluded. Checks all 2^n - 1 nonzero sign vectors with
/// strict_feasibility and, for boundary patterns whose gates sit exactly on
/// hyperplanes, also screens the masks 1(X g >= 0) induced by the
/// feasibility solves' witness points (ties snapped to active), verifying
/// each candidate before accepting it. Rejects n > 20.
inline PatternSet enumerate_all_patterns(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  require(n <= 20, "enumerate_all_patterns: n > 20 is not tractable (2^n sweep)");
  const double scale = std::max(X.cwiseAbs().maxCoeff(), 1e-300);
  const double snap = 1e-9 * scale;

  std::vector<ActivationPattern> accepted;
  std::vector<Eigen::VectorXd> accepted_gates;
  std::unordered_set<std::string> accepted_keys;
  std::vector<ActivationPattern> candidates;
  std::unordered_set<std::string> candidate_keys;

  auto snap_mask = [&](const Eigen::VectorXd& z) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      mask[static_cast<std::size_t>(i)] = (z[i] >= -snap) ? 1 : 0;
    return ActivationPattern(std::move(mask));
  };
  auto add_candidate = [&](const ActivationPattern& m) {
    if (!m.any_active()) return;
    if (accepted_keys.count(m.key()) || !candidate_keys.insert(m.key()).second) return;
    candidates.push_back(m);
  };

  const std::uint64_t limit = (std::uint64_t{1} << n);
  for (std::uint64_t bits = 1; bits < limit; ++bits) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      mask[static_cast<std::size_t>(i)] = (bits >> i) & 1;
    ActivationPattern pattern(std::move(mask));

    Eigen::MatrixXd a = X;
    const Eigen::VectorXd s = pattern.signs();
    for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j).array() *= s.array();
    const auto fit = detail::one_sided_feasibility_fit(a, Eigen::VectorXd::Ones(n),
                                                       20000, 1e-10);
    if (fit.objective <= 1e-10) {
      if (accepted_keys.insert(pattern.key()).second) {
        accepted.push_back(pattern);
        accepted_gates.push_back(fit.minimizer);
      }
    } else {
      // The failed solve's minimizer often lands on the boundary of a
      // neighboring cell; its tie-snapped mask is a candidate boundary
      // pattern.
      add_candidate(snap_mask(X * fit.minimizer));
    }
  }
  // The zero gate realizes the all-ones pattern by definition of 1(. >= 0).
  add_candidate(ActivationPattern(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1)));

  for (const auto& m : candidates) {
    if (accepted_keys.count(m.key())) continue;
    Eigen::VectorXd witness;
    if (detail::mask_realizable(m, X, &witness)) {
      accepted_keys.insert(m.key());
      accepted.push_back(m);
      accepted_gates.push_back(witness);
    }
  }
  return PatternSet(n, std::move(accepted), std::move(accepted_gates));
}

}  // namespace cvxrelu
