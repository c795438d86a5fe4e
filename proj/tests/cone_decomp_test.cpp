#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cvxrelu/cone_decomp.hpp"
#include "cvxrelu/feasibility.hpp"
#include "cvxrelu/grelu.hpp"
#include "test_util.hpp"

using namespace cvxrelu;

namespace {

ActivationPattern random_pattern(Eigen::Index /*n*/, std::uint64_t seed,
                                 const Eigen::MatrixXd& x) {
  return sample_gate_patterns(x, 20, seed).pattern(0);
}

Eigen::MatrixXd prop4_matrix(double alpha) {
  Eigen::MatrixXd x(2, 2);
  x << 1.0, alpha, -1.0, alpha;
  return x;
}

}  // namespace

TEST(ClosedFormDecompose, InsideTheConeNothingToCorrect) {
  const Eigen::MatrixXd x = testutil::random_orthogonal_rows(3, 5, 1);
  const ActivationPattern p = random_pattern(3, 2, x);
  // A strictly feasible point of the cone: scale the gate.
  const PatternSet set(3, {p}, {});
  Eigen::VectorXd u = Eigen::VectorXd::Zero(5);
  // Build u in the cone via the decomposition of a random point, then reuse v.
  const Decomposition seed_dec =
      closed_form_decompose(p, x, testutil::random_matrix(5, 1, 3));
  u = seed_dec.v;
  const Decomposition dec = closed_form_decompose(p, x, u);
  EXPECT_LT(dec.w.norm(), 1e-12);
  EXPECT_LT((dec.v - u).norm(), 1e-12);
  EXPECT_NEAR(dec.blowup, 1.0, 1e-10);
}

TEST(ClosedFormDecompose, ZeroInputGivesZeroFactors) {
  const Eigen::MatrixXd x = testutil::random_orthogonal_rows(3, 4, 5);
  const ActivationPattern p = random_pattern(3, 6, x);
  const Decomposition dec = closed_form_decompose(p, x, Eigen::VectorXd::Zero(4));
  EXPECT_TRUE(dec.v.isZero());
  EXPECT_TRUE(dec.w.isZero());
  EXPECT_TRUE(std::isinf(dec.blowup));
}

TEST(ClosedFormDecompose, OrthogonalRowsSatisfyPropositionBounds) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Eigen::Index n = 2 + seed % 4, d = n + 1 + seed % 3;
    const Eigen::MatrixXd x = testutil::random_orthogonal_rows(n, d, 100 + seed);
    const ActivationPattern p = random_pattern(n, 200 + seed, x);
    const Eigen::VectorXd u = testutil::random_matrix(d, 1, 300 + seed);
    const Decomposition dec = closed_form_decompose(p, x, u);
    EXPECT_LE(dec.residual_v, 1e-8);
    EXPECT_LE(dec.residual_w, 1e-8);
    EXPECT_LE(dec.blowup, 2.0 + 1e-8);
    EXPECT_LT((dec.v - dec.w - u).norm(), 1e-12);
  }
}

TEST(ClosedFormDecompose, GeneralGaussianRowsStayInTheCone) {
  // Without orthogonal rows the 2-approximation can fail, but the factors
  // must still land in the cone and reconstruct u exactly.
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Eigen::Index n = 2 + seed % 5, d = n + seed % 4;
    const Eigen::MatrixXd x = testutil::random_matrix(n, d, 400 + seed);
    const ActivationPattern p = random_pattern(n, 500 + seed, x);
    const Eigen::VectorXd u = testutil::random_matrix(d, 1, 600 + seed);
    const Decomposition dec = closed_form_decompose(p, x, u);
    EXPECT_LE(dec.residual_v, 1e-8);
    EXPECT_LE(dec.residual_w, 1e-8);
    EXPECT_LT((dec.v - dec.w - u).norm(), 1e-12);
  }
}

TEST(ClosedFormDecompose, RejectsRankDeficientData) {
  Eigen::MatrixXd x(3, 4);
  x.setZero();
  x.row(0) << 1, 0, 0, 0;
  x.row(1) << 0, 1, 0, 0;
  x.row(2) << 1, 1, 0, 0;  // dependent
  EXPECT_THROW(
      closed_form_decompose(ActivationPattern({1, 1, 1}), x, Eigen::VectorXd::Ones(4)),
      std::invalid_argument);
  EXPECT_THROW(closed_form_decompose(ActivationPattern({1, 1, 1}),
                                     testutil::random_matrix(5, 3, 7),
                                     Eigen::VectorXd::Ones(3)),
               std::invalid_argument);
}

TEST(CdApprox, FeasiblePointKeepsZeroCorrection) {
  const Eigen::MatrixXd x = testutil::random_orthogonal_rows(3, 4, 11);
  const ActivationPattern p = random_pattern(3, 12, x);
  const Eigen::VectorXd inside =
      closed_form_decompose(p, x, testutil::random_matrix(4, 1, 13)).v;
  CdaConfig config;
  const Decomposition dec = cd_approx(p, x, inside, config);
  EXPECT_LT(dec.w.norm(), 1e-8);
  EXPECT_LT((dec.v - inside).norm(), 1e-8);
}

TEST(CdApprox, RecoversMinNormSolutionOnWorstCaseInstance) {
  // X = [[1, 0.5], [-1, 0.5]], u = [2, 0]: the minimum-norm decomposition is
  // v = [1, 2], w = [-1, 2].
  const Eigen::MatrixXd x = prop4_matrix(0.5);
  const ActivationPattern p({1, 1});
  Eigen::VectorXd u(2);
  u << 2.0, 0.0;
  const Decomposition dec = cd_approx(p, x, u);
  EXPECT_NEAR(dec.w(0, 0), -1.0, 1e-3);
  EXPECT_NEAR(dec.w(1, 0), 2.0, 1e-3);
  EXPECT_NEAR(dec.v(0, 0), 1.0, 1e-3);
  EXPECT_NEAR(dec.v(1, 0), 2.0, 1e-3);
}

TEST(CdApprox, NarrowConeForcesUnboundedBlowup) {
  // At alpha = 0.05 the symbolic solution is v = [1, 20], w = [-1, 20], so
  // the blowup exceeds 20: no absolute approximation constant exists.
  const Eigen::MatrixXd x = prop4_matrix(0.05);
  const ActivationPattern p({1, 1});
  Eigen::VectorXd u(2);
  u << 2.0, 0.0;
  const Decomposition dec = cd_approx(p, x, u);
  const double expected = (Eigen::Vector2d(1, 20).norm() + Eigen::Vector2d(-1, 20).norm()) / 2.0;
  EXPECT_GE(dec.blowup, 20.0);
  EXPECT_NEAR(dec.blowup, expected, 1e-2);
}

TEST(CdApprox, ResidualBoundFromSubgradientOptimality) {
  // ||(X~ w)_-|| + ||(X~ v)_-|| <= 2 rho / sigma_min(X~) + 10 * tol, with tol
  // the subgradient-norm tolerance of the subsolver (grad_tol is on the
  // squared norm, so tol = 1e-6 here).
  for (double rho : {1e-4, 1e-6, 1e-8}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Eigen::MatrixXd x = testutil::random_orthogonal_rows(3, 5, 700 + seed, 0.5, 2.0);
      const ActivationPattern p = random_pattern(3, 800 + seed, x);
      const Eigen::VectorXd u = testutil::random_matrix(5, 1, 900 + seed);
      CdaConfig config;
      config.rho = rho;
      config.subsolver.grad_tol = 1e-12;
      config.subsolver.max_iters = 200000;
      const Decomposition dec = cd_approx(p, x, u, config);
      Eigen::MatrixXd xt = x;
      const Eigen::VectorXd s = p.signs();
      for (Eigen::Index j = 0; j < xt.cols(); ++j) xt.col(j).array() *= s.array();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(xt);
      const double smin = svd.singularValues().minCoeff();
      const double resid = (xt * dec.w).cwiseMin(0.0).norm() + (xt * dec.v).cwiseMin(0.0).norm();
      EXPECT_LE(resid, 2.0 * rho / smin + 10.0 * 1e-6) << "rho " << rho << " seed " << seed;
    }
  }
}

TEST(CdApprox, ResidualsShrinkAsRhoDecreases) {
  // Squared cone residuals plateau near the solver tolerance once rho drops
  // below it; up to that floor they decrease with rho.
  const Eigen::MatrixXd x = testutil::random_matrix(4, 3, 21);
  const ActivationPattern p = random_pattern(4, 22, x);
  const Eigen::VectorXd u = testutil::random_matrix(3, 1, 23);
  double previous = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd warm;
  for (int k = 2; k <= 10; ++k) {
    CdaConfig config;
    config.rho = std::pow(10.0, -k);
    config.subsolver.grad_tol = 1e-12;
    config.subsolver.max_iters = 500000;
    const Decomposition dec =
        cd_approx(p, x, u, config, warm.size() > 0 ? &warm : nullptr);
    warm = dec.w;
    const double resid = dec.residual_v + dec.residual_w;
    EXPECT_LE(resid, previous + 1e-10) << "k = " << k;
    previous = resid;
  }
}

TEST(DecomposeModel, ZeroWeightsStayZero) {
  const Eigen::MatrixXd x = testutil::random_matrix(4, 3, 31);
  const PatternSet patterns = sample_gate_patterns(x, 5, 32);
  const ModelDecomposition out =
      decompose_model(BlockWeights::zero(3, patterns.size(), 1), patterns, x);
  EXPECT_TRUE(out.weights.v.mat.isZero());
  EXPECT_TRUE(out.weights.w.mat.isZero());
  EXPECT_EQ(out.aggregate_blowup, 1.0);
  EXPECT_TRUE(out.failed_blocks.empty());
}

TEST(DecomposeModel, LossTermIsPreservedExactly) {
  const Dataset data = testutil::random_normalized_dataset(6, 4, 1, 41);
  const PatternSet patterns = sample_gate_patterns(data.features, 6, 42);
  const BlockWeights u(testutil::random_matrix(4, patterns.size(), 43), 1);
  const ModelDecomposition out = decompose_model(u, patterns, data.features);
  BlockWeights diff = out.weights.v;
  diff.mat -= out.weights.w.mat;
  EXPECT_LT((diff.mat - u.mat).norm(), 1e-12);
  const Eigen::MatrixXd pred_u = apply_expanded(patterns, data.features, u);
  const Eigen::MatrixXd pred_vw = apply_expanded(patterns, data.features, diff);
  EXPECT_LT((pred_u - pred_vw).norm(), 1e-12);
}

TEST(DecomposeModel, UnregularizedObjectiveEqualsGatedObjective) {
  // At lambda = 0 the constrained objective at (v, w) equals the gated
  // objective at u because predictions coincide.
  const Dataset data = testutil::random_normalized_dataset(4, 5, 1, 51);
  const PatternSet patterns = sample_gate_patterns(data.features, 5, 52);
  GReLUConfig config;
  config.lambda = 0.0;
  config.grad_tol = 1e-14;
  config.max_iters = 20000;
  auto [u, report] = solve_grelu(data, patterns, config);
  const ModelDecomposition out = decompose_model(u, patterns, data.features);
  const double gated = grelu_objective(u, patterns, data.features, data.targets, 0.0);
  BlockWeights diff = out.weights.v;
  diff.mat -= out.weights.w.mat;
  const double constrained =
      grelu_objective(diff, patterns, data.features, data.targets, 0.0);
  EXPECT_NEAR(gated, constrained, 1e-12);
}

TEST(DecomposeModel, RegularizedObjectiveWithinConditionNumberBound) {
  // d* <= F(v, w) <= d* + 2 lambda kappa_hat sum ||u_i|| with kappa_hat the
  // worst conditioning of the sign-adjusted rows active in each block's
  // correction. Orthogonal rows keep the surrogate bound valid.
  const double lambda = 1e-2;
  const Eigen::MatrixXd x = testutil::random_orthogonal_rows(4, 6, 61);
  Dataset data(x, testutil::random_matrix(4, 1, 62));
  const PatternSet patterns = sample_gate_patterns(x, 6, 63);
  GReLUConfig config;
  config.lambda = lambda;
  config.grad_tol = 1e-18;
  config.max_iters = 100000;
  auto [u, report] = solve_grelu(data, patterns, config);
  const double d_star = report.objective_trace.back();
  const ModelDecomposition out = decompose_model(u, patterns, x);

  double kappa_hat = 1.0;
  for (Eigen::Index i = 0; i < patterns.size(); ++i) {
    const Eigen::VectorXd z = signed_matrix_apply(patterns.pattern(i), x, u.block(i));
    std::vector<Eigen::Index> active;
    for (Eigen::Index r = 0; r < z.size(); ++r)
      if (z[r] < 0.0) active.push_back(r);
    if (active.empty()) continue;
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(active.size()), x.cols());
    for (std::size_t r = 0; r < active.size(); ++r) {
      const Eigen::Index row = active[r];
      const double sign = patterns.pattern(i).active(row) ? 1.0 : -1.0;
      rows.row(static_cast<Eigen::Index>(r)) = sign * x.row(row);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
    const Eigen::VectorXd sv = svd.singularValues();
    double smallest_nonzero = sv[0];
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv[k] > 1e-12 * sv[0]) smallest_nonzero = sv[k];
    kappa_hat = std::max(kappa_hat, sv[0] / smallest_nonzero);
  }

  const double loss = grelu_objective(u, patterns, x, data.targets, 0.0);
  const double constrained =
      loss + lambda * (out.weights.v.group_norm() + out.weights.w.group_norm());
  EXPECT_GE(constrained, d_star - 1e-9);
  EXPECT_LE(constrained, d_star + 2.0 * lambda * kappa_hat * u.group_norm() + 1e-9);
}

TEST(DecomposeModel, FailedBlocksFallBackToIdentity) {
  const Eigen::MatrixXd x = testutil::random_matrix(5, 3, 71);  // not full row-rank
  const PatternSet patterns = sample_gate_patterns(x, 4, 72);
  const BlockWeights u(testutil::random_matrix(3, patterns.size(), 73), 1);
  CdaConfig config;
  config.subsolver.max_iters = 0;  // force subsolver failure
  const ModelDecomposition out = decompose_model(u, patterns, x, config);
  EXPECT_FALSE(out.failed_blocks.empty());
  for (Eigen::Index i : out.failed_blocks) {
    EXPECT_TRUE(out.weights.v.block(i).isApprox(u.block(i)));
    EXPECT_TRUE(out.weights.w.block(i).isZero());
  }
}
