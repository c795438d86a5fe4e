#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>

#include <cstdint>
#include <random>

#include "cvxrelu/dataset.hpp"

namespace cvxrelu {

/// Parameters of the realizable synthetic classification problem: Gaussian
/// features with a controlled covariance spectrum and labels produced by a
/// random teacher ReLU network, so a wide enough student can fit the
/// training set exactly.
struct SynthParams {
  Eigen::Index n_train = 250;
  Eigen::Index n_test = 250;
  Eigen::Index dim = 50;
  Eigen::Index teacher_width = 100;
  double cond = 10.0;  // exact condition number of the feature covariance
  std::uint64_t seed = 0;
};

struct SynthProblem {
  Dataset train;
  Dataset test;
  Eigen::MatrixXd covariance;      // the exact Sigma used
  Eigen::MatrixXd teacher_w1;      // d x m
  Eigen::VectorXd teacher_w2;      // m
};

/// Builds X ~ N(0, Sigma) with Sigma assembled from a random orthonormal
/// eigenbasis and eigenvalues drawn in [1, cond], the extremes pinned to
/// cond and 1 so the condition number is exact. Labels are
/// y = sign(teacher(X)) in {-1, +1}.
inline SynthProblem synth_realizable(const SynthParams& params) {
  require(params.n_train >= 1 && params.dim >= 1 && params.teacher_width >= 1,
          "synth_realizable: n, d, and teacher width must be >= 1");
  require(params.cond >= 1.0, "synth_realizable: cond must be >= 1");
  std::mt19937_64 rng(params.seed);
  const Eigen::Index d = params.dim;

  Eigen::VectorXd eigenvalues(d);
  if (d == 1) {
    eigenvalues[0] = 1.0;
  } else {
    std::uniform_real_distribution<double> interior(1.0, params.cond);
    for (Eigen::Index k = 0; k < d - 2; ++k) eigenvalues[k] = interior(rng);
    eigenvalues[d - 2] = params.cond;
    eigenvalues[d - 1] = 1.0;
  }
  const Eigen::MatrixXd basis =
      Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(d, d, rng))
          .householderQ() *
      Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sigma = basis * eigenvalues.asDiagonal() * basis.transpose();
  const Eigen::MatrixXd sqrt_sigma =
      basis * eigenvalues.cwiseSqrt().asDiagonal() * basis.transpose();

  const Eigen::MatrixXd teacher_w1 = gaussian_matrix(d, params.teacher_width, rng);
  const Eigen::VectorXd teacher_w2 = gaussian_vector(params.teacher_width, rng);

  auto make_split = [&](Eigen::Index n) {
    const Eigen::MatrixXd x = gaussian_matrix(n, d, rng) * sqrt_sigma;
    const Eigen::VectorXd score = (x * teacher_w1).cwiseMax(0.0) * teacher_w2;
    Eigen::MatrixXd y(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = score[i] >= 0.0 ? 1.0 : -1.0;
    return Dataset(x, y);
  };

  SynthProblem problem{make_split(params.n_train),
                       make_split(std::max<Eigen::Index>(params.n_test, 1)), sigma,
                       teacher_w1, teacher_w2};
  return problem;
}

}  // namespace cvxrelu
