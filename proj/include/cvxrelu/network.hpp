#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "cvxrelu/cone_decomp.hpp"
#include "cvxrelu/dataset.hpp"
#include "cvxrelu/grelu.hpp"
#include "cvxrelu/patterns.hpp"

namespace cvxrelu {

/// Two-layer gated network: neuron j fires on rows where X gate_j >= 0 and
/// contributes (X W1_j) * W2_j there. W2 rows are scaled standard basis
/// vectors under the one-neuron-per-class construction.
struct GReLUNetwork {
  Eigen::MatrixXd gates;  // d x m
  Eigen::MatrixXd W1;     // d x m
  Eigen::MatrixXd W2;     // m x c

  Eigen::Index width() const { return W1.cols(); }
};

/// Standard two-layer ReLU network. An empty network (m == 0) predicts zero.
struct ReLUNetwork {
  Eigen::MatrixXd W1;     // m x d
  Eigen::MatrixXd W2;     // m x c
  Eigen::MatrixXd gates;  // d x m, optional provenance (empty when unknown)

  Eigen::Index width() const { return W1.rows(); }
};

enum class NetworkKind { ReLU, GReLU };

/// Maps gated blocks to a network with the balanced rescaling
/// W1 = u / sqrt(||u||), w2 = sqrt(||u||), one neuron per (block, class)
/// column with norm above drop_tol. Requires gate provenance on the pattern
/// set; enumerated or harvested patterns carry witness gates.
inline GReLUNetwork grelu_to_network(const GReLUWeights& u, const PatternSet& patterns,
                                     double drop_tol = 1e-8) {
  require(drop_tol >= 0.0, "grelu_to_network: drop_tol must be >= 0");
  require(u.count() == patterns.size(), "grelu_to_network: block count != pattern count");
  require(patterns.has_gates() || patterns.size() == 0,
          "grelu_to_network: patterns lack gate provenance, cannot build a predictive model");
  const Eigen::Index c = u.classes;
  std::vector<Eigen::Index> block_of, class_of;
  for (Eigen::Index i = 0; i < u.count(); ++i)
    for (Eigen::Index k = 0; k < c; ++k)
      if (u.block(i).col(k).norm() > drop_tol) {
        block_of.push_back(i);
        class_of.push_back(k);
      }
  const Eigen::Index m = static_cast<Eigen::Index>(block_of.size());
  GReLUNetwork net;
  net.gates.resize(u.dim(), m);
  net.W1.resize(u.dim(), m);
  net.W2 = Eigen::MatrixXd::Zero(m, c);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::VectorXd col = u.block(block_of[j]).col(class_of[j]);
    const double scale = std::sqrt(col.norm());
    net.gates.col(j) = patterns.gate(block_of[j]);
    net.W1.col(j) = col / scale;
    net.W2(j, class_of[j]) = scale;
  }
  return net;
}

/// Maps cone-split blocks to a ReLU network: a positive neuron per nonzero
/// v column and a negative one per nonzero w column, balanced so the
/// weight-decay objective matches the group-l1 objective. Gate provenance is
/// attached when the pattern set has it.
inline ReLUNetwork relu_to_network(const ReLUWeights& weights, const PatternSet& patterns,
                                   double drop_tol = 1e-8) {
  require(drop_tol >= 0.0, "relu_to_network: drop_tol must be >= 0");
  require(weights.v.same_shape(weights.w), "relu_to_network: v/w shape mismatch");
  require(weights.v.count() == patterns.size(),
          "relu_to_network: block count != pattern count");
  const Eigen::Index c = weights.v.classes;
  const bool with_gates = patterns.has_gates();

  struct Neuron {
    Eigen::Index block, cls;
    double sign;
  };
  std::vector<Neuron> neurons;
  for (Eigen::Index i = 0; i < weights.v.count(); ++i)
    for (Eigen::Index k = 0; k < c; ++k) {
      if (weights.v.block(i).col(k).norm() > drop_tol) neurons.push_back({i, k, 1.0});
      if (weights.w.block(i).col(k).norm() > drop_tol) neurons.push_back({i, k, -1.0});
    }
  const Eigen::Index m = static_cast<Eigen::Index>(neurons.size());
  ReLUNetwork net;
  net.W1.resize(m, weights.v.dim());
  net.W2 = Eigen::MatrixXd::Zero(m, c);
  if (with_gates) net.gates.resize(weights.v.dim(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& nrn = neurons[static_cast<std::size_t>(j)];
    const BlockWeights& source = nrn.sign > 0 ? weights.v : weights.w;
    const Eigen::VectorXd col = source.block(nrn.block).col(nrn.cls);
    const double scale = std::sqrt(col.norm());
    net.W1.row(j) = (col / scale).transpose();
    net.W2(j, nrn.cls) = nrn.sign * scale;
    if (with_gates) net.gates.col(j) = patterns.gate(nrn.block);
  }
  return net;
}

/// Gated forward pass: sum_j diag(1(X g_j >= 0)) X W1_j W2_j.
inline Eigen::MatrixXd predict_grelu(const GReLUNetwork& net, const Eigen::MatrixXd& x) {
  require(net.width() == 0 || x.cols() == net.W1.rows(),
          "predict_grelu: feature dimension mismatch");
  const Eigen::Index c = net.W2.cols() > 0 ? net.W2.cols() : 1;
  if (net.width() == 0) return Eigen::MatrixXd::Zero(x.rows(), c);
  const Eigen::MatrixXd pre = x * net.W1;          // n x m
  const Eigen::MatrixXd gate_pre = x * net.gates;  // n x m
  const Eigen::MatrixXd active =
      ((gate_pre.array() >= 0.0).cast<double>() * pre.array()).matrix();
  return active * net.W2;
}

/// ReLU forward pass: sum_j (X W1_j)+ W2_j.
inline Eigen::MatrixXd predict_relu(const ReLUNetwork& net, const Eigen::MatrixXd& x) {
  require(net.width() == 0 || x.cols() == net.W1.cols(),
          "predict_relu: feature dimension mismatch");
  const Eigen::Index c = net.W2.cols() > 0 ? net.W2.cols() : 1;
  if (net.width() == 0) return Eigen::MatrixXd::Zero(x.rows(), c);
  const Eigen::MatrixXd active = (x * net.W1.transpose()).cwiseMax(0.0);
  return active * net.W2;
}

namespace detail {

/// Weight-decay penalty of one neuron: ||W1_j||^2 plus the squared second
/// layer, which is the l1 norm squared for vector outputs.
inline double neuron_penalty(const Eigen::VectorXd& w1_col, const Eigen::RowVectorXd& w2_row) {
  const double w2 = w2_row.lpNorm<1>();
  return w1_col.squaredNorm() + w2 * w2;
}

}  // namespace detail

/// Non-convex training objective: normalized squared loss plus the
/// weight-decay penalty (lambda/2) sum_j ||W1_j||^2 + |w2_j|^2 (the second
/// layer contributing its squared l1 norm for vector outputs).
inline double nc_objective(const ReLUNetwork& net, const Dataset& data, double lambda) {
  const double normalizer = static_cast<double>(data.n()) * static_cast<double>(data.classes());
  const double loss =
      0.5 * (predict_relu(net, data.features) - data.targets).squaredNorm() / normalizer;
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < net.width(); ++j)
    penalty += detail::neuron_penalty(net.W1.row(j).transpose(), net.W2.row(j));
  return loss + 0.5 * lambda * penalty;
}

inline double nc_objective(const GReLUNetwork& net, const Dataset& data, double lambda) {
  const double normalizer = static_cast<double>(data.n()) * static_cast<double>(data.classes());
  const double loss =
      0.5 * (predict_grelu(net, data.features) - data.targets).squaredNorm() / normalizer;
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < net.width(); ++j)
    penalty += detail::neuron_penalty(net.W1.col(j), net.W2.row(j));
  return loss + 0.5 * lambda * penalty;
}

}  // namespace cvxrelu
