#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "cvxrelu/grelu.hpp"
#include "cvxrelu/network.hpp"
#include "cvxrelu/serialization.hpp"
#include "test_util.hpp"

using namespace cvxrelu;

namespace {

struct GatedSetup {
  Dataset data;
  PatternSet patterns;
  GReLUWeights weights;
};

GatedSetup gated_setup(Eigen::Index n, Eigen::Index d, Eigen::Index c, Eigen::Index p,
                       std::uint64_t seed) {
  Dataset data = testutil::random_normalized_dataset(n, d, c, seed);
  PatternSet patterns = sample_gate_patterns(data.features, p, seed + 1);
  GReLUWeights weights(testutil::random_matrix(d, patterns.size() * c, seed + 2), c);
  return {std::move(data), std::move(patterns), std::move(weights)};
}

}  // namespace

TEST(GreluToNetwork, UnitNormBlockMapsIdentically) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 0, 1, 1, 1;
  const PatternSet patterns = sample_gate_patterns(x, 10, 3);
  GReLUWeights u = BlockWeights::zero(2, patterns.size(), 1);
  Eigen::Vector2d dir(0.6, 0.8);  // unit norm
  u.block(0) = dir;
  const GReLUNetwork net = grelu_to_network(u, patterns);
  ASSERT_EQ(net.width(), 1);
  EXPECT_TRUE(net.W1.col(0).isApprox(dir));
  EXPECT_DOUBLE_EQ(net.W2(0, 0), 1.0);
  EXPECT_TRUE(net.gates.col(0).isApprox(patterns.gate(0)));
}

TEST(GreluToNetwork, ZeroBlocksAreDropped) {
  const GatedSetup s = gated_setup(5, 3, 1, 4, 10);
  GReLUWeights u = s.weights;
  u.block(1).setZero();
  const GReLUNetwork net = grelu_to_network(u, s.patterns);
  EXPECT_EQ(net.width(), s.patterns.size() - 1);
}

TEST(GreluToNetwork, MissingGateProvenanceIsAnError) {
  const GatedSetup s = gated_setup(5, 3, 1, 4, 20);
  const PatternSet gateless(s.patterns.n(), s.patterns.patterns());
  EXPECT_THROW(grelu_to_network(s.weights, gateless), std::invalid_argument);
}

TEST(GreluToNetwork, ObjectiveEqualityAcrossTheMapping) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GatedSetup s = gated_setup(6, 3, 1, 5, 100 + 10 * seed);
    const double lambda = 0.05 + 0.1 * static_cast<double>(seed % 3);
    const double convex = grelu_objective(s.weights, s.patterns, s.data.features,
                                          s.data.targets, lambda);
    const GReLUNetwork net = grelu_to_network(s.weights, s.patterns);
    const double nonconvex = nc_objective(net, s.data, lambda);
    EXPECT_NEAR(convex, nonconvex, 1e-10 * std::max(1.0, std::abs(convex)));
  }
}

TEST(PredictGrelu, EmptyNetworkPredictsZero) {
  GReLUNetwork net;
  net.gates.resize(3, 0);
  net.W1.resize(3, 0);
  net.W2.resize(0, 1);
  EXPECT_TRUE(predict_grelu(net, testutil::random_matrix(4, 3, 30)).isZero());
}

TEST(PredictGrelu, MatchesExpandedOperatorOnTrainingData) {
  const GatedSetup s = gated_setup(7, 3, 2, 5, 40);
  const GReLUNetwork net = grelu_to_network(s.weights, s.patterns);
  const Eigen::MatrixXd direct = apply_expanded(s.patterns, s.data.features, s.weights);
  const Eigen::MatrixXd via_net = predict_grelu(net, s.data.features);
  EXPECT_LT((direct - via_net).norm(), 1e-10);
}

TEST(PredictGrelu, NegatedGateFlipsPatternOffTies) {
  const GatedSetup s = gated_setup(6, 3, 1, 4, 50);
  GReLUNetwork net = grelu_to_network(s.weights, s.patterns);
  const Eigen::MatrixXd pre = s.data.features * net.gates;
  GReLUNetwork flipped = net;
  flipped.gates = -net.gates;
  const Eigen::MatrixXd pre_flipped = s.data.features * flipped.gates;
  for (Eigen::Index j = 0; j < net.width(); ++j)
    for (Eigen::Index i = 0; i < 6; ++i)
      if (pre(i, j) != 0.0)
        EXPECT_NE(pre(i, j) >= 0.0, pre_flipped(i, j) >= 0.0);
}

TEST(PredictRelu, SingleNonNegativeNeuronIsLinear) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 2, 1, 0, 3;  // all rows have nonnegative entries
  ReLUNetwork net;
  net.W1.resize(1, 2);
  net.W1 << 1.0, 0.5;  // X W1' >= 0 rowwise
  net.W2 = Eigen::MatrixXd::Constant(1, 1, 1.0);
  EXPECT_TRUE(predict_relu(net, x).isApprox(x * net.W1.transpose()));
}

TEST(PredictRelu, EmptyNetworkPredictsZero) {
  ReLUNetwork net;
  net.W1.resize(0, 3);
  net.W2.resize(0, 1);
  EXPECT_TRUE(predict_relu(net, testutil::random_matrix(5, 3, 60)).isZero());
}

TEST(PredictRelu, ScaleInvarianceOfPredictions) {
  const GatedSetup s = gated_setup(6, 3, 1, 4, 70);
  ReLUWeights vw;
  vw.v = s.weights;
  vw.w = BlockWeights::zero(3, s.patterns.size(), 1);
  ReLUNetwork net = relu_to_network(vw, s.patterns);
  const Eigen::MatrixXd base = predict_relu(net, s.data.features);
  ReLUNetwork scaled = net;
  const double beta = 3.7;
  scaled.W1.row(0) *= beta;
  scaled.W2.row(0) /= beta;
  EXPECT_LT((predict_relu(scaled, s.data.features) - base).norm(), 1e-10);
}

TEST(ReluToNetwork, AllZeroBlocksGiveEmptyNetwork) {
  const GatedSetup s = gated_setup(5, 3, 1, 4, 80);
  ReLUWeights vw;
  vw.v = BlockWeights::zero(3, s.patterns.size(), 1);
  vw.w = BlockWeights::zero(3, s.patterns.size(), 1);
  const ReLUNetwork net = relu_to_network(vw, s.patterns);
  EXPECT_EQ(net.width(), 0);
  EXPECT_TRUE(predict_relu(net, s.data.features).isZero());
}

TEST(ReluToNetwork, ObjectiveEqualityOnFeasiblePairs) {
  // Feasible (v, w) from the closed form on orthogonal rows: the balanced
  // network reproduces the constrained objective exactly.
  const Eigen::MatrixXd x = testutil::random_orthogonal_rows(4, 6, 90);
  Dataset data(x, testutil::random_matrix(4, 1, 91));
  const PatternSet patterns = sample_gate_patterns(x, 5, 92);
  ReLUWeights vw;
  vw.v = BlockWeights::zero(6, patterns.size(), 1);
  vw.w = BlockWeights::zero(6, patterns.size(), 1);
  for (Eigen::Index i = 0; i < patterns.size(); ++i) {
    const Decomposition dec = closed_form_decompose(
        patterns.pattern(i), x, testutil::random_matrix(6, 1, 93 + i));
    vw.v.block(i) = dec.v;
    vw.w.block(i) = dec.w;
  }
  const double lambda = 0.07;
  BlockWeights diff = vw.v;
  diff.mat -= vw.w.mat;
  const double convex =
      grelu_objective(diff, patterns, x, data.targets, 0.0) +
      lambda * (vw.v.group_norm() + vw.w.group_norm());
  const ReLUNetwork net = relu_to_network(vw, patterns);
  const double nonconvex = nc_objective(net, data, lambda);
  EXPECT_NEAR(convex, nonconvex, 1e-10 * std::max(1.0, std::abs(convex)));
  // Predictions agree as well since every factor lies in its cone.
  const Eigen::MatrixXd via_net = predict_relu(net, x);
  const Eigen::MatrixXd direct = apply_expanded(patterns, x, diff);
  EXPECT_LT((via_net - direct).norm(), 1e-8);
}

TEST(NcObjective, EmptyNetworkIsScaledTargetNorm) {
  const Dataset data = testutil::random_normalized_dataset(6, 3, 2, 95);
  ReLUNetwork net;
  net.W1.resize(0, 3);
  net.W2.resize(0, 2);
  EXPECT_DOUBLE_EQ(nc_objective(net, data, 0.3),
                   0.5 * data.targets.squaredNorm() / (6.0 * 2.0));
}

TEST(NcObjective, PenaltyIsLinearInLambda) {
  const GatedSetup s = gated_setup(6, 3, 1, 4, 96);
  const GReLUNetwork net = grelu_to_network(s.weights, s.patterns);
  const double base = nc_objective(net, s.data, 0.0);
  const double at1 = nc_objective(net, s.data, 0.1) - base;
  const double at2 = nc_objective(net, s.data, 0.2) - base;
  EXPECT_NEAR(at2, 2.0 * at1, 1e-12 * std::max(1.0, std::abs(at2)));
}

TEST(NcObjective, BalancedMappingAchievesTheGroupNorm) {
  // For the balanced network, 0.5 (||W1_j||^2 + w2_j^2) = ||u_j||: the
  // weight-decay penalty equals the group-l1 penalty (Young's equality case).
  const GatedSetup s = gated_setup(6, 3, 1, 4, 97);
  const GReLUNetwork net = grelu_to_network(s.weights, s.patterns);
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < net.width(); ++j)
    penalty += 0.5 * (net.W1.col(j).squaredNorm() + net.W2.row(j).squaredNorm());
  EXPECT_NEAR(penalty, s.weights.group_norm(), 1e-12 * std::max(1.0, penalty));
}

TEST(MulticlassStructure, OneNeuronPerClassWithUnitSecondLayerRows) {
  const GatedSetup s = gated_setup(6, 3, 3, 4, 98);
  const GReLUNetwork net = grelu_to_network(s.weights, s.patterns);
  EXPECT_EQ(net.width(), s.patterns.size() * 3);
  for (Eigen::Index j = 0; j < net.width(); ++j) {
    Eigen::Index nonzeros = 0;
    for (Eigen::Index k = 0; k < 3; ++k)
      if (net.W2(j, k) != 0.0) ++nonzeros;
    EXPECT_EQ(nonzeros, 1);
    // Scale out the balancing: the direction of W2_j is a basis vector.
    const double scale = net.W2.row(j).lpNorm<1>();
    EXPECT_GT(scale, 0.0);
  }
}

TEST(Serialization, GatedModelRoundTripsBitExactly) {
  const GatedSetup s = gated_setup(6, 3, 2, 4, 99);
  SerializedModel model;
  model.kind = NetworkKind::GReLU;
  model.grelu = grelu_to_network(s.weights, s.patterns);
  model.scaler.norms = testutil::random_matrix(3, 1, 100).cwiseAbs();
  model.scaler.applied = true;
  const SerializedModel back = model_from_json(model_to_json(model));
  EXPECT_EQ(back.kind, NetworkKind::GReLU);
  EXPECT_TRUE(back.grelu.W1 == model.grelu.W1);
  EXPECT_TRUE(back.grelu.W2 == model.grelu.W2);
  EXPECT_TRUE(back.grelu.gates == model.grelu.gates);
  EXPECT_TRUE(back.scaler.norms == model.scaler.norms);
  EXPECT_TRUE(back.scaler.applied);
}

TEST(Serialization, ReluModelRoundTripsThroughAFile) {
  const GatedSetup s = gated_setup(5, 3, 1, 4, 101);
  ReLUWeights vw;
  vw.v = s.weights;
  vw.w = BlockWeights(0.5 * s.weights.mat, 1);
  SerializedModel model;
  model.kind = NetworkKind::ReLU;
  model.relu = relu_to_network(vw, s.patterns);
  model.scaler.norms = Eigen::VectorXd::Ones(3);
  model.scaler.applied = true;
  const std::string path = ::testing::TempDir() + "relu_model.json";
  save_model(model, path);
  const SerializedModel back = load_model(path);
  EXPECT_EQ(back.kind, NetworkKind::ReLU);
  EXPECT_TRUE(back.relu.W1 == model.relu.W1);
  EXPECT_TRUE(back.relu.W2 == model.relu.W2);
  EXPECT_TRUE(back.relu.gates == model.relu.gates);
}

TEST(Serialization, RejectsUnsupportedVersionsAndKinds) {
  nlohmann::json j;
  j["format_version"] = 2;
  EXPECT_THROW(model_from_json(j), std::runtime_error);
  j["format_version"] = 1;
  j["kind"] = "perceptron";
  EXPECT_THROW(model_from_json(j), std::runtime_error);
}
