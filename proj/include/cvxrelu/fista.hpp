#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cvxrelu/block_weights.hpp"
#include "cvxrelu/common.hpp"

namespace cvxrelu {

enum class SolverVariant { RFista, Fista, PgdLs, Pgd };
enum class SolveStatus { Converged, MaxIters };

/// Configuration for the proximal-gradient family. Defaults follow the
/// reference parameterization: backtracking factor 0.8, forward factor 1.25,
/// tightness threshold 5, unit initial step, and termination when the
/// squared norm of the minimum-norm subgradient drops below 1e-6.
struct GReLUConfig {
  double lambda = 0.0;
  int max_iters = 2000;
  double grad_tol = 1e-6;  // threshold on the SQUARED min-norm subgradient
  double beta = 0.8;       // backtracking factor, in (0, 1)
  double alpha = 1.25;     // forward-tracking factor, > 1
  double c = 5.0;          // tightness threshold for step growth, >= 1
  double eta0 = 1.0;       // initial step size
  SolverVariant variant = SolverVariant::RFista;

  void validate() const {
    require(lambda >= 0.0, "GReLUConfig: lambda must be >= 0");
    require(max_iters >= 0, "GReLUConfig: max_iters must be >= 0");
    require(grad_tol >= 0.0, "GReLUConfig: grad_tol must be >= 0");
    require(beta > 0.0 && beta < 1.0, "GReLUConfig: beta must lie in (0,1)");
    require(alpha > 1.0, "GReLUConfig: alpha must be > 1");
    require(c >= 1.0, "GReLUConfig: c must be >= 1");
    require(eta0 > 0.0, "GReLUConfig: eta0 must be > 0");
  }
};

/// What a solve did. `data_passes` counts gradient evaluations plus
/// line-search function evaluations, the work measure used when comparing
/// solver variants; monitoring quantities (objective and stationarity traces)
/// are recomputed on the side and not charged. Traces include the initial
/// point, and their final entries always describe the returned weights.
struct SolverReport {
  SolveStatus status = SolveStatus::MaxIters;
  Eigen::Index iterations = 0;
  long data_passes = 0;
  std::vector<double> objective_trace;
  std::vector<double> subgrad_sq_trace;
  double wall_time = 0.0;
};

/// Smooth part of a composite objective. Called with grad == nullptr for a
/// value-only evaluation (line search); otherwise *grad receives the gradient
/// reshaped like the weights.
using SmoothEval = std::function<double(const BlockWeights& u, BlockWeights* grad)>;

/// Block soft-thresholding: scales each block by (1 - threshold/||z_i||)+,
/// mapping blocks with norm <= threshold exactly to zero. `threshold` is the
/// product of step size and regularization strength.
inline BlockWeights group_prox(const BlockWeights& z, double threshold) {
  require(threshold >= 0.0, "group_prox: threshold must be >= 0");
  if (threshold == 0.0) return z;
  BlockWeights out = z;
  for (Eigen::Index i = 0; i < out.count(); ++i) {
    const double norm = out.block_norm(i);
    if (norm <= threshold)
      out.block(i).setZero();
    else
      out.block(i) *= 1.0 - threshold / norm;
  }
  return out;
}

/// Squared norm of the minimum-norm subgradient of f + lambda * group-l1 at
/// u, given grad = grad f(u). Zero exactly at stationary points.
inline double min_norm_subgrad_sq(const BlockWeights& u, const BlockWeights& grad,
                                  double lambda) {
  require(u.same_shape(grad), "min_norm_subgrad_sq: shape mismatch");
  if (lambda == 0.0) return grad.mat.squaredNorm();
  double total = 0.0;
  for (Eigen::Index i = 0; i < u.count(); ++i) {
    const double unorm = u.block_norm(i);
    if (unorm > 0.0) {
      total += (grad.block(i) + (lambda / unorm) * u.block(i)).squaredNorm();
    } else {
      const double g = grad.block(i).norm();
      const double slack = std::max(g - lambda, 0.0);
      total += slack * slack;
    }
  }
  return total;
}

struct LineSearchResult {
  BlockWeights candidate;
  double f_candidate = 0.0;
  double eta = 0.0;
  int fn_evals = 0;
};

/// Backtracking line search along the arc of proximal solutions: starting
/// from eta, shrink by beta until f(u+(eta)) <= Q_{y,eta}(u+(eta)), where
/// u+(eta) = prox_{eta*lambda}(y - eta*grad). Steps below 1e-16 signal
/// numerical breakdown and raise.
inline LineSearchResult line_search(const BlockWeights& y, double f_y,
                                    const BlockWeights& grad_y, double eta,
                                    double lambda, double beta,
                                    const SmoothEval& smooth) {
  require(eta > 0.0, "line_search: eta must be > 0");
  LineSearchResult result;
  BlockWeights step = y;
  while (true) {
    if (eta < 1e-16)
      throw std::runtime_error("line_search: step size underflow (eta < 1e-16)");
    step.mat = y.mat - eta * grad_y.mat;
    BlockWeights candidate = group_prox(step, eta * lambda);
    const double f_candidate = smooth(candidate, nullptr);
    ++result.fn_evals;
    const Eigen::MatrixXd diff = candidate.mat - y.mat;
    const double quad =
        f_y + (grad_y.mat.array() * diff.array()).sum() + diff.squaredNorm() / (2.0 * eta);
    if (f_candidate <= quad) {
      result.candidate = std::move(candidate);
      result.f_candidate = f_candidate;
      result.eta = eta;
      return result;
    }
    eta *= beta;
  }
}

/// Step-size initialization from the tightness of the previous quadratic
/// bound: omega = ||u_k - y_{k-1}||^2 / (2 eta (f(u_k) - l_{y_{k-1}}(u_k))).
/// A loose bound (omega >= c) earns a forward-tracked step alpha * eta; a
/// degenerate denominator means f was locally affine, the loosest case of
/// all, and also grows the step.
inline double step_init(double prev_eta, double sq_dist, double bregman_gap,
                        const GReLUConfig& config) {
  require(prev_eta > 0.0, "step_init: prev_eta must be > 0");
  if (bregman_gap <= 1e-14) return config.alpha * prev_eta;
  const double omega = sq_dist / (2.0 * prev_eta * bregman_gap);
  return omega >= config.c ? config.alpha * prev_eta : prev_eta;
}

/// Restart test: true when u_{k+1} is not a descent step with respect to the
/// proximal gradient mapping G = (y_k - u_{k+1}) / eta, i.e. when
/// <G, u_{k+1} - u_k> > 0, equivalently <u_{k+1} - u_k, u_{k+1} - y_k> < 0.
/// With the opposite sign the test fires on every plain proximal step
/// (y_k = u_k makes the product ||u_{k+1} - u_k||^2), which pins y to u
/// permanently and reduces accelerated iterations to plain proximal descent.
inline bool restart_check(const BlockWeights& u_next, const BlockWeights& u_k,
                          const BlockWeights& y_k) {
  const Eigen::MatrixXd du = u_next.mat - u_k.mat;
  const Eigen::MatrixXd dy = u_next.mat - y_k.mat;
  return (du.array() * dy.array()).sum() < 0.0;
}

/// Smooth part 0.5 ||(b - A w)+||^2 of the one-sided quadratics used by the
/// feasibility oracle and the approximate cone decomposition. The matrices
/// are captured by value; column k of b pairs with column k of the weights.
inline SmoothEval make_one_sided_quadratic(Eigen::MatrixXd a, Eigen::MatrixXd b) {
  return [a = std::move(a), b = std::move(b)](const BlockWeights& w, BlockWeights* grad) {
    const Eigen::MatrixXd slack = (b - a * w.mat).cwiseMax(0.0);
    if (grad) {
      grad->classes = w.classes;
      grad->mat = -(a.transpose() * slack);
    }
    return 0.5 * slack.squaredNorm();
  };
}

struct SolveExtras {
  const BlockWeights* warm_start = nullptr;
  /// Optional early exit once the composite objective reaches this value;
  /// used by feasibility solves where reaching (near) zero settles the
  /// question regardless of stationarity.
  std::optional<double> objective_target;
  /// Optional early exit on an iterate-level certificate (e.g. a scalable
  /// feasible point). Checked at every primal iterate; counts as converged.
  std::function<bool(const BlockWeights&)> stop_predicate;
};

/// Proximal-gradient driver for min f(u) + lambda * sum_i ||u_i||.
///
/// Variants:
///   RFista  - FISTA momentum, prox-arc line search, tightness-ratio step
///             growth, and gradient-mapping restarts.
///   Fista   - as above without restarts.
///   PgdLs   - no momentum, with line search and step growth.
///   Pgd     - fixed step eta0, no search, no momentum.
///
/// Stationarity is measured by the squared minimum-norm subgradient at the
/// primal iterate u_k (not the extrapolated point) and compared against
/// config.grad_tol. A solve is deterministic given its inputs.
inline std::pair<BlockWeights, SolverReport> solve_composite(
    const SmoothEval& smooth, Eigen::Index dim, Eigen::Index count, Eigen::Index classes,
    const GReLUConfig& config, const SolveExtras& extras = {}) {
  config.validate();
  const auto start_time = std::chrono::steady_clock::now();
  const double lambda = config.lambda;
  const bool momentum = config.variant == SolverVariant::RFista ||
                        config.variant == SolverVariant::Fista;

  BlockWeights u = extras.warm_start ? *extras.warm_start
                                     : BlockWeights::zero(dim, count, classes);
  require(u.dim() == dim && u.count() == count && u.classes == classes,
          "solve_composite: warm start has the wrong shape");
  BlockWeights y = u;
  double t = 1.0;
  double eta = config.eta0;

  SolverReport report;
  BlockWeights grad_y;
  double f_y = smooth(y, &grad_y);
  ++report.data_passes;

  // Gradient and smooth value at u. y == u at the start and whenever momentum
  // is absent or a restart fires, in which case these alias the y quantities.
  BlockWeights grad_u = grad_y;
  double f_u = f_y;

  double prev_sq_dist = 0.0, prev_bregman_gap = 0.0;
  bool have_omega_inputs = false;

  while (true) {
    const double objective = f_u + lambda * u.group_norm();
    const double stat = min_norm_subgrad_sq(u, grad_u, lambda);
    report.objective_trace.push_back(objective);
    report.subgrad_sq_trace.push_back(stat);
    if (stat <= config.grad_tol ||
        (extras.objective_target && objective <= *extras.objective_target) ||
        (extras.stop_predicate && extras.stop_predicate(u))) {
      report.status = SolveStatus::Converged;
      break;
    }
    if (report.iterations >= config.max_iters) {
      report.status = SolveStatus::MaxIters;
      break;
    }

    BlockWeights u_next;
    if (config.variant == SolverVariant::Pgd) {
      BlockWeights step = y;
      step.mat = y.mat - eta * grad_y.mat;
      u_next = group_prox(step, eta * lambda);
    } else {
      if (have_omega_inputs) eta = step_init(eta, prev_sq_dist, prev_bregman_gap, config);
      LineSearchResult ls = line_search(y, f_y, grad_y, eta, lambda, config.beta, smooth);
      report.data_passes += ls.fn_evals;
      eta = ls.eta;
      u_next = std::move(ls.candidate);
      const Eigen::MatrixXd diff = u_next.mat - y.mat;
      prev_sq_dist = diff.squaredNorm();
      prev_bregman_gap = ls.f_candidate - (f_y + (grad_y.mat.array() * diff.array()).sum());
      have_omega_inputs = true;
    }

    bool y_equals_u = true;
    if (momentum) {
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      const bool restart =
          config.variant == SolverVariant::RFista && restart_check(u_next, u, y);
      if (restart) {
        y = u_next;
        t = 1.0;
      } else {
        y = u_next;
        y.mat += ((t - 1.0) / t_next) * (u_next.mat - u.mat);
        t = t_next;
        y_equals_u = false;
      }
    } else {
      y = u_next;
      t = 1.0;
    }

    u = std::move(u_next);
    ++report.iterations;

    f_y = smooth(y, &grad_y);
    ++report.data_passes;
    if (y_equals_u) {
      grad_u = grad_y;
      f_u = f_y;
    } else {
      // Monitoring-only evaluation at the primal iterate; not charged to
      // data_passes, which tracks algorithmic work in the usual accounting.
      f_u = smooth(u, &grad_u);
    }
  }

  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return {std::move(u), std::move(report)};
}

}  // namespace cvxrelu
