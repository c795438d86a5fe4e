#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cvxrelu/block_weights.hpp"
#include "cvxrelu/fista.hpp"
#include "cvxrelu/patterns.hpp"

namespace cvxrelu {

/// One block's split u = v - w with v, w meant to lie in the pattern's cone.
/// Reconstruction is exact by construction (v is always computed as u + w);
/// the residuals report how far each factor sits outside the cone.
struct Decomposition {
  Eigen::MatrixXd v;  // d x c
  Eigen::MatrixXd w;  // d x c
  double residual_v = 0.0;  // cone_gap of v (squared norm of negative part)
  double residual_w = 0.0;  // cone_gap of w
  double blowup = 1.0;      // (||v|| + ||w||) / ||u||, +inf when u == 0
};

struct CdaConfig {
  double rho = 1e-10;
  GReLUConfig subsolver = [] {
    GReLUConfig c;
    c.grad_tol = 1e-10;
    c.max_iters = 20000;
    return c;
  }();
};

namespace detail {

inline Eigen::MatrixXd pinv_svd(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-10 * sv[0] : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff) inv[i] = 1.0 / sv[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

inline void check_full_row_rank(const Eigen::MatrixXd& x, const char* who) {
  if (x.rows() > x.cols())
    throw std::invalid_argument(std::string(who) + ": X has more rows than columns, "
                                "cannot be full row-rank");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] <= 1e-8 * sv[0])
    throw std::invalid_argument(
        std::string(who) + ": X is numerically rank-deficient (sigma_min/sigma_max <= 1e-8)");
}

}  // namespace detail

/// Closed-form decomposition for full row-rank data: with I the rows where
/// <x~_i, u> < 0, take w = -X~_I^+ X~_I u and v = u + w, where X~_I^+ is the
/// I-column block of the full pseudo-inverse pinv(X~). Written out, this is
/// w = -pinv(X~) (X~ u)_- and it puts both factors exactly in the cone:
/// X~ X~^+ = I for full row-rank X~, so X~ w = -(X~ u)_- is nonnegative and
/// X~ v = (X~ u)_+ as well. (Using the pseudo-inverse of the submatrix
/// instead only works when the rows of X are mutually orthogonal; for
/// general rows it leaves the complement rows of X~ w sign-unconstrained.)
inline Decomposition closed_form_decompose(const ActivationPattern& pattern,
                                           const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& u) {
  require(pattern.size() == X.rows(), "closed_form_decompose: pattern length != rows");
  require(u.rows() == X.cols(), "closed_form_decompose: weight dimension mismatch");
  detail::check_full_row_rank(X, "closed_form_decompose");

  Eigen::MatrixXd xt = X;
  const Eigen::VectorXd s = pattern.signs();
  for (Eigen::Index j = 0; j < xt.cols(); ++j) xt.col(j).array() *= s.array();

  Decomposition out;
  const Eigen::MatrixXd negative_part = (xt * u).cwiseMin(0.0);
  out.w = -(detail::pinv_svd(xt) * negative_part);
  out.v = u + out.w;
  out.residual_v = cone_gap(pattern, X, out.v);
  out.residual_w = cone_gap(pattern, X, out.w);
  const double unorm = u.norm();
  out.blowup = unorm > 0.0 ? (out.v.norm() + out.w.norm()) / unorm
                           : std::numeric_limits<double>::infinity();
  return out;
}

/// Approximate decomposition: minimizes the regularized one-sided quadratic
/// 0.5 ||(b - X~ w)+||^2 + rho ||w|| with b = (-X~ u)+, then sets v = u + w.
/// Smaller rho trades a larger w against smaller cone residuals; rho = 0 is
/// the pure feasibility objective.
inline Decomposition cd_approx(const ActivationPattern& pattern, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& u, const CdaConfig& config = {},
                               const Eigen::MatrixXd* warm_start = nullptr) {
  require(pattern.size() == X.rows(), "cd_approx: pattern length != rows");
  require(u.rows() == X.cols(), "cd_approx: weight dimension mismatch");
  require(config.rho >= 0.0, "cd_approx: rho must be >= 0");

  Eigen::MatrixXd xt = X;
  const Eigen::VectorXd s = pattern.signs();
  for (Eigen::Index j = 0; j < xt.cols(); ++j) xt.col(j).array() *= s.array();
  const Eigen::MatrixXd b = (-(xt * u)).cwiseMax(0.0);

  const SmoothEval smooth = make_one_sided_quadratic(xt, b);
  GReLUConfig sub = config.subsolver;
  sub.lambda = config.rho;
  SolveExtras extras;
  BlockWeights warm;
  if (warm_start) {
    require(warm_start->rows() == X.cols() && warm_start->cols() == u.cols(),
            "cd_approx: warm start shape mismatch");
    warm = BlockWeights(*warm_start, u.cols());
    extras.warm_start = &warm;
  }
  auto [w, report] = solve_composite(smooth, X.cols(), 1, u.cols(), sub, extras);
  if (report.status != SolveStatus::Converged)
    throw std::runtime_error("cd_approx: subsolver did not reach its tolerance");

  Decomposition out;
  out.w = w.mat;
  out.v = u + out.w;
  out.residual_v = cone_gap(pattern, X, out.v);
  out.residual_w = cone_gap(pattern, X, out.w);
  const double unorm = u.norm();
  out.blowup = unorm > 0.0 ? (out.v.norm() + out.w.norm()) / unorm
                           : std::numeric_limits<double>::infinity();
  return out;
}

/// Cone-split weights of the constrained problem: paired blocks (v_i, w_i).
struct ReLUWeights {
  BlockWeights v;
  BlockWeights w;
};

/// Result of decomposing a whole gated model.
struct ModelDecomposition {
  ReLUWeights weights;
  double aggregate_blowup = 1.0;  // sum(||v_i|| + ||w_i||) / sum(||u_i||)
  double max_residual = 0.0;      // largest per-block cone_gap over all v, w
  std::vector<Eigen::Index> failed_blocks;
};

/// Decomposes every block of a gated solution onto its pattern's cone pair:
/// closed form when X is full row-rank, the approximate program otherwise.
/// A block whose decomposition fails falls back to (u_i, 0), which keeps
/// predictions exact while surfacing the infeasibility through the residual.
inline ModelDecomposition decompose_model(const BlockWeights& u, const PatternSet& patterns,
                                          const Eigen::MatrixXd& X,
                                          const CdaConfig& config = {}) {
  require(u.count() == patterns.size(), "decompose_model: block count != pattern count");
  bool full_row_rank = true;
  try {
    detail::check_full_row_rank(X, "decompose_model");
  } catch (const std::invalid_argument&) {
    full_row_rank = false;
  }

  ModelDecomposition out;
  out.weights.v = BlockWeights::zero(u.dim(), u.count(), u.classes);
  out.weights.w = BlockWeights::zero(u.dim(), u.count(), u.classes);
  double vw_norm = 0.0, u_norm = 0.0;
  for (Eigen::Index i = 0; i < u.count(); ++i) {
    const Eigen::MatrixXd block = u.block(i);
    Decomposition dec;
    bool ok = true;
    try {
      dec = full_row_rank ? closed_form_decompose(patterns.pattern(i), X, block)
                          : cd_approx(patterns.pattern(i), X, block, config);
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok) {
      dec.v = block;
      dec.w = Eigen::MatrixXd::Zero(block.rows(), block.cols());
      dec.residual_v = cone_gap(patterns.pattern(i), X, dec.v);
      dec.residual_w = 0.0;
      out.failed_blocks.push_back(i);
    }
    out.weights.v.block(i) = dec.v;
    out.weights.w.block(i) = dec.w;
    out.max_residual = std::max({out.max_residual, dec.residual_v, dec.residual_w});
    vw_norm += dec.v.norm() + dec.w.norm();
    u_norm += block.norm();
  }
  out.aggregate_blowup = u_norm > 0.0 ? vw_norm / u_norm : 1.0;
  return out;
}

}  // namespace cvxrelu
