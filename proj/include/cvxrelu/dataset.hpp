#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "cvxrelu/block_weights.hpp"
#include "cvxrelu/common.hpp"

namespace cvxrelu {

/// A dense supervised dataset: features (n x d) and targets (n x c).
/// Targets are a single column for regression/binary problems and a one-hot
/// matrix for multi-class problems. All entries must be finite.
struct Dataset {
  Eigen::MatrixXd features;                // n x d
  Eigen::MatrixXd targets;                 // n x c
  std::vector<std::string> feature_names;  // empty or length d

  Dataset(Eigen::MatrixXd x, Eigen::MatrixXd y,
          std::vector<std::string> names = {})
      : features(std::move(x)), targets(std::move(y)), feature_names(std::move(names)) {
    require(features.rows() >= 1 && features.cols() >= 1,
            "Dataset: need at least one example and one feature");
    require(targets.cols() >= 1, "Dataset: need at least one target column");
    require(targets.rows() == features.rows(),
            "Dataset: feature and target row counts differ");
    require(all_finite(features), "Dataset: features contain NaN or Inf");
    require(all_finite(targets), "Dataset: targets contain NaN or Inf");
    require(feature_names.empty() ||
                static_cast<Eigen::Index>(feature_names.size()) == features.cols(),
            "Dataset: feature_names length does not match feature count");
  }

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  Eigen::Index classes() const { return targets.cols(); }
};

/// Records the original column norms used by normalize_columns so that models
/// fit in the normalized space can be mapped back to the raw one.
struct ColumnScaler {
  Eigen::VectorXd norms;  // length d, entries >= 0
  bool applied = false;
};

/// Scales each feature column to unit Euclidean norm. Zero columns are left
/// untouched and their norm is recorded as 0.
inline std::pair<Dataset, ColumnScaler> normalize_columns(const Dataset& data) {
  const Eigen::Index d = data.dim();
  ColumnScaler scaler;
  scaler.norms.resize(d);
  Eigen::MatrixXd scaled = data.features;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double norm = data.features.col(j).norm();
    scaler.norms[j] = norm;
    if (norm > 0.0) scaled.col(j) /= norm;
  }
  scaler.applied = true;
  return {Dataset(std::move(scaled), data.targets, data.feature_names), scaler};
}

/// Maps weights fit on normalized features back to the raw feature space by
/// dividing row j of every block by the recorded column norm. Rows belonging
/// to zero columns are set to 0; such features carry no signal either way.
inline BlockWeights denormalize_weights(const BlockWeights& weights,
                                        const ColumnScaler& scaler) {
  require(scaler.applied, "denormalize_weights: scaler was never applied");
  require(weights.dim() == scaler.norms.size(),
          "denormalize_weights: block dimension does not match scaler");
  BlockWeights out = weights;
  for (Eigen::Index j = 0; j < scaler.norms.size(); ++j) {
    if (scaler.norms[j] > 0.0)
      out.mat.row(j) /= scaler.norms[j];
    else
      out.mat.row(j).setZero();
  }
  return out;
}

/// Inverse of denormalize_weights for round trips from serialized models.
inline BlockWeights renormalize_weights(const BlockWeights& weights,
                                        const ColumnScaler& scaler) {
  require(weights.dim() == scaler.norms.size(),
          "renormalize_weights: block dimension does not match scaler");
  BlockWeights out = weights;
  for (Eigen::Index j = 0; j < scaler.norms.size(); ++j) out.mat.row(j) *= scaler.norms[j];
  return out;
}

}  // namespace cvxrelu
