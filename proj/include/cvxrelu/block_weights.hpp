#pragma once

#include <Eigen/Dense>

#include "cvxrelu/common.hpp"

namespace cvxrelu {

/// Weights of a block-separable model: `count` blocks, each `dim x classes`,
/// stored side by side in a single `dim x (count * classes)` matrix so that
/// global linear algebra stays vectorized while block structure remains
/// addressable for the group penalty.
///
/// Block i occupies columns [i * classes, (i + 1) * classes). The block norm
/// is the Frobenius norm, which reduces to the Euclidean norm for scalar
/// outputs (classes == 1).
struct BlockWeights {
  Eigen::MatrixXd mat;        // dim x (count * classes)
  Eigen::Index classes = 1;

  BlockWeights() = default;
  BlockWeights(Eigen::MatrixXd m, Eigen::Index c) : mat(std::move(m)), classes(c) {
    require(c >= 1, "BlockWeights: classes must be >= 1");
    require(mat.cols() % c == 0, "BlockWeights: columns not a multiple of classes");
  }

  static BlockWeights zero(Eigen::Index dim, Eigen::Index count, Eigen::Index c) {
    return BlockWeights(Eigen::MatrixXd::Zero(dim, count * c), c);
  }

  Eigen::Index dim() const { return mat.rows(); }
  Eigen::Index count() const { return classes == 0 ? 0 : mat.cols() / classes; }

  auto block(Eigen::Index i) { return mat.middleCols(i * classes, classes); }
  auto block(Eigen::Index i) const { return mat.middleCols(i * classes, classes); }

  double block_norm(Eigen::Index i) const { return block(i).norm(); }

  /// Sum of block norms, the group-l1 penalty without its multiplier.
  double group_norm() const {
    double total = 0.0;
    for (Eigen::Index i = 0; i < count(); ++i) total += block_norm(i);
    return total;
  }

  bool same_shape(const BlockWeights& other) const {
    return mat.rows() == other.mat.rows() && mat.cols() == other.mat.cols() &&
           classes == other.classes;
  }
};

}  // namespace cvxrelu
