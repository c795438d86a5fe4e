#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iostream>
#include <utility>
#include <vector>

#include "cvxrelu/cone_decomp.hpp"
#include "cvxrelu/dataset.hpp"
#include "cvxrelu/expanded_operator.hpp"
#include "cvxrelu/fista.hpp"
#include "cvxrelu/grelu.hpp"
#include "cvxrelu/patterns.hpp"

namespace cvxrelu {

/// Multiplier estimates for the cone constraints, one column per
/// (pattern, class) pair aligned with the block layout: gamma for the v
/// blocks, zeta for the w blocks. Kept elementwise nonnegative by the
/// clamped dual update.
struct DualVars {
  Eigen::MatrixXd gamma;  // n x (P*c)
  Eigen::MatrixXd zeta;   // n x (P*c)
};

/// Augmented Lagrangian configuration. Defaults: initial penalty 100,
/// windowing target [1e-3, 1e-2] on the constraint gap with a mild solve
/// tolerance of 10^(-3/2), inner solves capped at 1000 iterations with the
/// standard 1e-6 squared-subgradient tolerance, and an overall budget of
/// 10000 inner iterations.
struct ALConfig {
  double delta0 = 100.0;
  double window_lower = 1e-3;
  double window_upper = 1e-2;
  double window_tol = 0.0316227766016838;  // 10^(-3/2), on the subgradient norm
  int max_window_adjustments = 30;
  GReLUConfig inner = [] {
    GReLUConfig c;
    c.max_iters = 1000;
    c.grad_tol = 1e-6;
    return c;
  }();
  double gap_tol = 1e-3;   // on the (squared-norm) constraint gap
  double stat_tol = 1e-3;  // on the min-norm subgradient norm of the AL
  long total_inner_budget = 10000;
};

namespace detail {

/// Column (i, k) of the result is (2D_i - I) X m_(i,k) for the matching
/// column of m; the batched form of signed_matrix_apply.
inline Eigen::MatrixXd signed_apply_all(const PatternSet& patterns,
                                        const Eigen::MatrixXd& xm,
                                        Eigen::Index classes) {
  Eigen::MatrixXd out = xm;
  const Eigen::MatrixXd& signs = patterns.signs();
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    for (Eigen::Index k = 0; k < classes; ++k)
      out.col(i * classes + k).array() *= signs.col(i).array();
  return out;
}

inline Eigen::MatrixXd sign_scale_columns(const PatternSet& patterns, Eigen::MatrixXd m,
                                          Eigen::Index classes) {
  const Eigen::MatrixXd& signs = patterns.signs();
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    for (Eigen::Index k = 0; k < classes; ++k)
      m.col(i * classes + k).array() *= signs.col(i).array();
  return m;
}

inline Eigen::MatrixXd indicator_scale_columns(const PatternSet& patterns,
                                               Eigen::MatrixXd m, Eigen::Index classes) {
  const Eigen::MatrixXd& ind = patterns.indicators();
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    for (Eigen::Index k = 0; k < classes; ++k)
      m.col(i * classes + k).array() *= ind.col(i).array();
  return m;
}

}  // namespace detail

/// Sum of squared norms of the negative parts of X~_i v_i and X~_i w_i: the
/// squared infeasibility of (v, w) for the cone constraints.
inline double constraint_gap(const BlockWeights& v, const BlockWeights& w,
                             const PatternSet& patterns, const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd sv = detail::signed_apply_all(patterns, X * v.mat, v.classes);
  const Eigen::MatrixXd sw = detail::signed_apply_all(patterns, X * w.mat, w.classes);
  return sv.array().min(0.0).matrix().squaredNorm() +
         sw.array().min(0.0).matrix().squaredNorm();
}

/// Clamped multiplier update: gamma <- (gamma - delta X~ v)+ and likewise for
/// zeta, the proximal-point step on the dual.
inline DualVars dual_update(const DualVars& duals, const BlockWeights& v,
                            const BlockWeights& w, double delta,
                            const PatternSet& patterns, const Eigen::MatrixXd& X) {
  require(delta > 0.0, "dual_update: delta must be > 0");
  DualVars out;
  out.gamma = (duals.gamma - delta * detail::signed_apply_all(patterns, X * v.mat, v.classes))
                  .cwiseMax(0.0);
  out.zeta = (duals.zeta - delta * detail::signed_apply_all(patterns, X * w.mat, w.classes))
                 .cwiseMax(0.0);
  return out;
}

/// Smooth part of the augmented Lagrangian over the stacked weights
/// Z = [v_1 .. v_P | w_1 .. w_P]: the normalized squared loss of
/// sum_i D_i X (v_i - w_i) plus (delta/2) [||(gamma/delta - X~ v)+||^2 +
/// ||(zeta/delta - X~ w)+||^2]. The group-l1 term stays in the prox.
inline SmoothEval make_al_smooth(const PatternSet& patterns, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& Y, const DualVars& duals,
                                 double delta) {
  const double normalizer = static_cast<double>(Y.rows()) * static_cast<double>(Y.cols());
  return [&patterns, &X, &Y, &duals, delta, normalizer](const BlockWeights& z,
                                                        BlockWeights* grad) {
    const Eigen::Index c = z.classes;
    const Eigen::Index pc = z.mat.cols() / 2;
    const Eigen::MatrixXd xv = X * z.mat.leftCols(pc);
    const Eigen::MatrixXd xw = X * z.mat.rightCols(pc);

    Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(Y.rows(), c);
    const Eigen::MatrixXd& ind = patterns.indicators();
    for (Eigen::Index i = 0; i < patterns.size(); ++i)
      for (Eigen::Index k = 0; k < c; ++k)
        pred.col(k).array() += ind.col(i).array() * (xv.col(i * c + k).array() -
                                                     xw.col(i * c + k).array());
    const Eigen::MatrixXd residual = pred - Y;

    const Eigen::MatrixXd slack_v =
        (duals.gamma / delta - detail::sign_scale_columns(patterns, xv, c)).cwiseMax(0.0);
    const Eigen::MatrixXd slack_w =
        (duals.zeta / delta - detail::sign_scale_columns(patterns, xw, c)).cwiseMax(0.0);

    const double value = 0.5 * residual.squaredNorm() / normalizer +
                         0.5 * delta * (slack_v.squaredNorm() + slack_w.squaredNorm());
    if (grad) {
      Eigen::MatrixXd masked(Y.rows(), pc);
      for (Eigen::Index i = 0; i < patterns.size(); ++i)
        for (Eigen::Index k = 0; k < c; ++k)
          masked.col(i * c + k).array() = ind.col(i).array() * residual.col(k).array();
      const Eigen::MatrixXd loss_grad = (X.transpose() * masked) / normalizer;
      grad->classes = c;
      grad->mat.resize(z.mat.rows(), z.mat.cols());
      grad->mat.leftCols(pc) =
          loss_grad -
          delta * (X.transpose() * detail::sign_scale_columns(patterns, slack_v, c));
      grad->mat.rightCols(pc) =
          -loss_grad -
          delta * (X.transpose() * detail::sign_scale_columns(patterns, slack_w, c));
    }
    return value;
  };
}

/// Full augmented Lagrangian value, including the group-l1 term of the
/// primal objective.
inline double augmented_lagrangian(const BlockWeights& v, const BlockWeights& w,
                                   const DualVars& duals, double delta,
                                   const Dataset& data, const PatternSet& patterns,
                                   double lambda) {
  require(delta > 0.0, "augmented_lagrangian: delta must be > 0");
  require(v.same_shape(w), "augmented_lagrangian: v/w shape mismatch");
  BlockWeights z = BlockWeights::zero(v.dim(), 2 * v.count(), v.classes);
  z.mat.leftCols(v.mat.cols()) = v.mat;
  z.mat.rightCols(w.mat.cols()) = w.mat;
  const SmoothEval smooth = make_al_smooth(patterns, data.features, data.targets, duals, delta);
  return smooth(z, nullptr) + lambda * (v.group_norm() + w.group_norm());
}

/// Lower bound on the dual function at the current multipliers:
/// L_delta(v, w, gamma, zeta) - (||gamma||^2 + ||zeta||^2) / (2 delta),
/// which is nondecreasing across exact outer iterations.
inline double dual_surrogate(const BlockWeights& v, const BlockWeights& w,
                             const DualVars& duals, double delta, const Dataset& data,
                             const PatternSet& patterns, double lambda) {
  return augmented_lagrangian(v, w, duals, delta, data, patterns, lambda) -
         (duals.gamma.squaredNorm() + duals.zeta.squaredNorm()) / (2.0 * delta);
}

struct WindowingResult {
  double delta = 0.0;
  double gap = 0.0;
  double used_tol = 0.0;   // subgradient-norm tolerance of the last mild solve
  int adjustments = 0;
  bool in_window = false;
  BlockWeights primal;     // stacked (v | w) iterate of the last mild solve
  long inner_iterations = 0;
  long data_passes = 0;
};

/// First-iteration tuning of the penalty strength: with zero multipliers and
/// a mild tolerance, minimize the AL and measure the constraint gap. Gap
/// above the window doubles delta; gap below halves delta and tightens the
/// mild tolerance. Stops once the gap lands in [lower, upper] or after the
/// adjustment cap, in which case the last delta is kept and a warning is
/// emitted (some problems, e.g. ones feasible at every penalty, never reach
/// the window).
inline WindowingResult windowing(const Dataset& data, const PatternSet& patterns,
                                 const ALConfig& config, const BlockWeights* warm = nullptr) {
  const Eigen::Index c = data.classes();
  const Eigen::Index pc = patterns.size() * c;
  DualVars zeros{Eigen::MatrixXd::Zero(data.n(), pc), Eigen::MatrixXd::Zero(data.n(), pc)};

  WindowingResult result;
  result.delta = config.delta0;
  result.used_tol = config.window_tol;
  result.primal = warm ? *warm : BlockWeights::zero(data.dim(), 2 * patterns.size(), c);

  for (int k = 0; k <= config.max_window_adjustments; ++k) {
    GReLUConfig inner = config.inner;
    inner.grad_tol = result.used_tol * result.used_tol;
    const SmoothEval smooth =
        make_al_smooth(patterns, data.features, data.targets, zeros, result.delta);
    SolveExtras extras;
    extras.warm_start = &result.primal;
    auto [z, report] =
        solve_composite(smooth, data.dim(), 2 * patterns.size(), c, inner, extras);
    result.primal = std::move(z);
    result.inner_iterations += report.iterations;
    result.data_passes += report.data_passes;

    BlockWeights v(result.primal.mat.leftCols(pc), c);
    BlockWeights w(result.primal.mat.rightCols(pc), c);
    result.gap = constraint_gap(v, w, patterns, data.features);
    if (result.gap >= config.window_lower && result.gap <= config.window_upper) {
      result.in_window = true;
      return result;
    }
    if (k == config.max_window_adjustments) break;
    ++result.adjustments;
    if (result.gap > config.window_upper) {
      result.delta *= 2.0;
    } else {
      result.delta /= 2.0;
      result.used_tol /= 2.0;
    }
  }
  std::cerr << "windowing: constraint gap never entered [" << config.window_lower << ", "
            << config.window_upper << "]; proceeding with delta = " << result.delta << "\n";
  return result;
}

struct ALResult {
  ReLUWeights weights;
  DualVars duals;
  SolverReport report;       // outer-level traces; iterations/data_passes are totals
  double delta = 0.0;        // penalty strength chosen by windowing
  double final_gap = 0.0;    // constraint gap at the returned iterate
  double final_stat_sq = 0.0;
};

/// Augmented Lagrangian method for the constrained problem: windowing picks
/// delta, then outer iterations alternate a warm-started inner solve of the
/// AL in (v, w) jointly (2P blocks under one group prox) with the clamped
/// dual update. Terminates when the constraint gap and the AL stationarity
/// both meet their tolerances, or when the inner-iteration budget (windowing
/// included) runs out.
inline ALResult solve_relu(const Dataset& data, const PatternSet& patterns,
                           const ALConfig& config, const ReLUWeights* warm_start = nullptr) {
  require(patterns.n() == data.n(), "solve_relu: pattern length != examples");
  require(config.delta0 > 0.0, "solve_relu: delta0 must be > 0");
  require(config.window_lower > 0.0 && config.window_lower < config.window_upper,
          "solve_relu: need 0 < window_lower < window_upper");
  const auto start_time = std::chrono::steady_clock::now();
  const Eigen::Index c = data.classes();
  const Eigen::Index p = patterns.size();
  const Eigen::Index pc = p * c;

  BlockWeights warm_stacked;
  const BlockWeights* warm = nullptr;
  if (warm_start) {
    warm_stacked = BlockWeights::zero(data.dim(), 2 * p, c);
    warm_stacked.mat.leftCols(pc) = warm_start->v.mat;
    warm_stacked.mat.rightCols(pc) = warm_start->w.mat;
    warm = &warm_stacked;
  }

  WindowingResult window = windowing(data, patterns, config, warm);
  const double delta = window.delta;
  BlockWeights z = std::move(window.primal);
  DualVars duals{Eigen::MatrixXd::Zero(data.n(), pc), Eigen::MatrixXd::Zero(data.n(), pc)};

  ALResult result;
  result.delta = delta;
  result.report.iterations = window.inner_iterations;
  result.report.data_passes = window.data_passes;
  result.report.status = SolveStatus::MaxIters;
  result.final_gap = window.gap;
  {
    const SmoothEval smooth =
        make_al_smooth(patterns, data.features, data.targets, duals, delta);
    BlockWeights grad;
    smooth(z, &grad);
    result.final_stat_sq = min_norm_subgrad_sq(z, grad, config.inner.lambda);
  }

  const double stat_tol_sq = config.stat_tol * config.stat_tol;
  while (true) {
    GReLUConfig inner = config.inner;
    const long remaining = config.total_inner_budget - result.report.iterations;
    if (remaining <= 0) break;
    inner.max_iters = static_cast<int>(std::min<long>(inner.max_iters, remaining));

    const SmoothEval smooth =
        make_al_smooth(patterns, data.features, data.targets, duals, delta);
    SolveExtras extras;
    extras.warm_start = &z;
    auto [z_next, inner_report] = solve_composite(smooth, data.dim(), 2 * p, c, inner, extras);
    z = std::move(z_next);
    result.report.iterations += inner_report.iterations;
    result.report.data_passes += inner_report.data_passes;

    BlockWeights v(z.mat.leftCols(pc), c);
    BlockWeights w(z.mat.rightCols(pc), c);
    const double gap = constraint_gap(v, w, patterns, data.features);
    const double stat_sq = inner_report.subgrad_sq_trace.back();
    result.report.objective_trace.push_back(
        augmented_lagrangian(v, w, duals, delta, data, patterns, config.inner.lambda));
    result.report.subgrad_sq_trace.push_back(stat_sq);
    result.final_gap = gap;
    result.final_stat_sq = stat_sq;

    if (gap <= config.gap_tol && stat_sq <= stat_tol_sq) {
      result.report.status = SolveStatus::Converged;
      break;
    }
    if (result.report.iterations >= config.total_inner_budget) break;
    duals = dual_update(duals, v, w, delta, patterns, data.features);
  }

  result.weights.v = BlockWeights(z.mat.leftCols(pc), c);
  result.weights.w = BlockWeights(z.mat.rightCols(pc), c);
  result.duals = std::move(duals);
  result.report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace cvxrelu
