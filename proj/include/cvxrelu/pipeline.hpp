#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvxrelu/cone_decomp.hpp"
#include "cvxrelu/csv.hpp"
#include "cvxrelu/dataset.hpp"
#include "cvxrelu/grelu.hpp"
#include "cvxrelu/network.hpp"
#include "cvxrelu/patterns.hpp"
#include "cvxrelu/relu.hpp"
#include "cvxrelu/serialization.hpp"
#include "cvxrelu/synth.hpp"

namespace cvxrelu {

/// Everything one solver invocation needs. Exactly one data source (csv path
/// or synthetic parameters) must be set, and the seed is mandatory for any
/// stochastic step.
struct RunSpec {
  std::string command = "train";  // train | decompose
  std::string data_path;
  std::string test_data_path;
  bool use_synth = false;
  SynthParams synth;
  std::string target_column;
  bool one_hot = false;

  std::string solver = "grelu";  // grelu | relu (decompose always starts from grelu)
  SolverVariant variant = SolverVariant::RFista;
  double lambda = 1e-4;
  Eigen::Index pattern_count = 100;
  std::uint64_t seed = 0;
  std::optional<double> tol;    // grelu: squared-subgradient; relu: gap and stationarity
  std::optional<int> max_iters; // grelu: iterations; relu: total inner budget
  double rho = 1e-10;           // decomposition penalty
  double drop_tol = 1e-8;

  std::string out_path;        // metrics json; empty -> stdout
  std::string model_out;       // model json; empty -> not written
  std::string patterns_from;   // model json whose first layer seeds the pattern set
  std::string gate_sampler = "gaussian";  // gaussian | patch:<h>x<w>
  Eigen::Index image_height = 0, image_width = 0, image_channels = 1;

  void validate() const {
    require(command == "train" || command == "decompose",
            "RunSpec: command must be train or decompose");
    require(use_synth != !data_path.empty(),
            "RunSpec: exactly one data source (csv path or synthetic parameters)");
    require(solver == "grelu" || solver == "relu", "RunSpec: solver must be grelu or relu");
    require(pattern_count >= 1, "RunSpec: pattern count must be >= 1");
    require(lambda >= 0.0, "RunSpec: lambda must be >= 0");
  }
};

/// Machine-readable summary of one run. Every number is recomputed from the
/// returned model rather than trusted from solver internals.
struct MetricsReport {
  Eigen::Index n = 0, d = 0, c = 0, patterns = 0;
  std::string solver, command;
  SolveStatus status = SolveStatus::MaxIters;
  Eigen::Index iterations = 0;
  long data_passes = 0;
  double objective_initial = 0.0, objective_final = 0.0, objective_min = 0.0;
  Eigen::Index trace_length = 0;
  double stationarity_sq = 0.0;
  std::optional<double> constraint_gap_value;  // relu runs
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double group_norm = 0.0;
  std::optional<double> blowup;        // decomposition runs
  std::optional<double> max_residual;  // decomposition runs
  double wall_time = 0.0;
};

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["problem"] = {{"n", m.n}, {"d", m.d}, {"c", m.c}, {"patterns", m.patterns}};
  j["command"] = m.command;
  j["solver"] = m.solver;
  j["status"] = m.status == SolveStatus::Converged ? "converged" : "max_iters";
  j["iterations"] = m.iterations;
  j["data_passes"] = m.data_passes;
  j["objective_trace_summary"] = {{"initial", m.objective_initial},
                                  {"final", m.objective_final},
                                  {"min", m.objective_min},
                                  {"length", m.trace_length}};
  j["objective_final"] = m.objective_final;
  j["stationarity_sq"] = m.stationarity_sq;
  if (m.constraint_gap_value) j["constraint_gap"] = *m.constraint_gap_value;
  j["train_accuracy"] = m.train_accuracy;
  if (m.test_accuracy) j["test_accuracy"] = *m.test_accuracy;
  j["group_norm"] = m.group_norm;
  if (m.blowup) j["blowup"] = *m.blowup;
  if (m.max_residual) j["max_residual"] = *m.max_residual;
  j["wall_time"] = m.wall_time;
  return j;
}

/// Classification accuracy: sign agreement for scalar targets, argmax
/// agreement (ties toward the lowest class index) for one-hot targets.
inline double accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          "accuracy: shape mismatch");
  const Eigen::Index n = targets.rows();
  Eigen::Index correct = 0;
  if (targets.cols() == 1) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pred = predictions(i, 0) >= 0.0 ? 1.0 : -1.0;
      const double truth = targets(i, 0) >= 0.0 ? 1.0 : -1.0;
      if (pred == truth) ++correct;
    }
  } else {
    auto argmax_low = [](const Eigen::RowVectorXd& row) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < row.size(); ++k)
        if (row[k] > row[best]) best = k;  // strict: ties stay at the lowest index
      return best;
    };
    for (Eigen::Index i = 0; i < n; ++i)
      if (argmax_low(predictions.row(i)) == argmax_low(targets.row(i))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace detail {

inline GateSampler make_gate_sampler(const RunSpec& spec, Eigen::Index d) {
  if (spec.gate_sampler == "gaussian" || spec.gate_sampler.empty()) return {};
  const std::string prefix = "patch:";
  require(spec.gate_sampler.rfind(prefix, 0) == 0,
          "RunSpec: gate sampler must be 'gaussian' or 'patch:<h>x<w>'");
  const std::string dims = spec.gate_sampler.substr(prefix.size());
  const auto xpos = dims.find('x');
  require(xpos != std::string::npos, "RunSpec: patch sampler needs the form patch:<h>x<w>");
  const Eigen::Index ph = std::stol(dims.substr(0, xpos));
  const Eigen::Index pw = std::stol(dims.substr(xpos + 1));
  const Eigen::Index h = spec.image_height, w = spec.image_width, ch = spec.image_channels;
  require(h >= 1 && w >= 1 && ch >= 1,
          "RunSpec: patch sampling needs --image-shape <h>x<w>[x<c>]");
  require(h * w * ch == d, "RunSpec: image shape does not match the feature count");
  require(ph >= 1 && ph <= h && pw >= 1 && pw <= w, "RunSpec: patch larger than image");
  return [=](std::mt19937_64& rng) {
    std::uniform_int_distribution<Eigen::Index> row_at(0, h - ph), col_at(0, w - pw);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index r0 = row_at(rng), c0 = col_at(rng);
    Eigen::VectorXd gate = Eigen::VectorXd::Zero(d);
    for (Eigen::Index r = r0; r < r0 + ph; ++r)
      for (Eigen::Index cc = c0; cc < c0 + pw; ++cc)
        for (Eigen::Index k = 0; k < ch; ++k) gate[(r * w + cc) * ch + k] = normal(rng);
    return gate;
  };
}

/// Reassembles per-pattern blocks from a network's neurons by matching each
/// neuron's gate back to its pattern mask on the (normalized) training
/// features. This is the recomputation path for reported objectives: it uses
/// only quantities that survive serialization.
struct RebuiltBlocks {
  BlockWeights positive;  // u blocks (grelu) or v blocks (relu)
  BlockWeights negative;  // w blocks (zero for grelu models)
};

inline Eigen::Index match_pattern(const PatternSet& patterns, const Eigen::VectorXd& preact) {
  // Sampled patterns use >= on the gate preactivation, harvested ones use >;
  // try both conventions before giving up.
  const ActivationPattern loose = pattern_from_preactivation(preact, /*strict=*/false);
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    if (patterns.pattern(i) == loose) return i;
  const ActivationPattern strict = pattern_from_preactivation(preact, /*strict=*/true);
  for (Eigen::Index i = 0; i < patterns.size(); ++i)
    if (patterns.pattern(i) == strict) return i;
  throw std::runtime_error("pipeline: a neuron's gate does not match any pattern in the set");
}

inline RebuiltBlocks rebuild_blocks(const Eigen::MatrixXd& gates, const Eigen::MatrixXd& w1_cols,
                                    const Eigen::MatrixXd& w2, const PatternSet& patterns,
                                    const Eigen::MatrixXd& x_norm, Eigen::Index classes) {
  RebuiltBlocks out;
  out.positive = BlockWeights::zero(w1_cols.rows(), patterns.size(), classes);
  out.negative = BlockWeights::zero(w1_cols.rows(), patterns.size(), classes);
  for (Eigen::Index j = 0; j < w1_cols.cols(); ++j) {
    const Eigen::Index block = match_pattern(patterns, x_norm * gates.col(j));
    for (Eigen::Index k = 0; k < classes; ++k) {
      const double w2jk = w2(j, k);
      if (w2jk == 0.0) continue;
      if (w2jk > 0.0)
        out.positive.block(block).col(k) += w1_cols.col(j) * w2jk;
      else
        out.negative.block(block).col(k) -= w1_cols.col(j) * w2jk;
    }
  }
  return out;
}

}  // namespace detail

struct RunResult {
  MetricsReport metrics;
  SerializedModel model;
  nlohmann::json metrics_json;
};

/// End-to-end solver invocation: ingest, normalize columns, build the
/// pattern set, run the selected solver, optionally decompose, map back to a
/// network, denormalize, and report. The returned model predicts on raw
/// features; reported objectives are recomputed from it in the normalized
/// space the solvers worked in.
inline RunResult run(const RunSpec& spec) {
  spec.validate();
  const auto start_time = std::chrono::steady_clock::now();

  // Ingest.
  std::optional<Dataset> train, test;
  if (spec.use_synth) {
    SynthParams params = spec.synth;
    params.seed = spec.seed;
    SynthProblem problem = synth_realizable(params);
    train.emplace(std::move(problem.train));
    test.emplace(std::move(problem.test));
  } else {
    train.emplace(load_csv(spec.data_path, spec.target_column, spec.one_hot));
    if (!spec.test_data_path.empty())
      test.emplace(load_csv(spec.test_data_path, spec.target_column, spec.one_hot));
  }

  auto [norm_data, scaler] = normalize_columns(*train);
  const Eigen::MatrixXd& x_norm = norm_data.features;
  const Eigen::Index classes = norm_data.classes();

  // Pattern set: sampled diversity set, optionally unioned with patterns
  // harvested from an external model's first layer.
  PatternSet patterns = sample_gate_patterns(x_norm, spec.pattern_count, spec.seed,
                                             detail::make_gate_sampler(spec, norm_data.dim()));
  if (!spec.patterns_from.empty()) {
    const SerializedModel external = load_model(spec.patterns_from);
    const Eigen::MatrixXd w1_raw = external.kind == NetworkKind::GReLU
                                       ? external.grelu.W1
                                       : external.relu.W1.transpose();
    BlockWeights as_blocks(w1_raw, 1);
    const Eigen::MatrixXd w1_norm = renormalize_weights(as_blocks, scaler).mat;
    patterns = union_patterns(patterns, patterns_from_weights(x_norm, w1_norm));
  }

  MetricsReport metrics;
  metrics.command = spec.command;
  metrics.solver = spec.command == "decompose" ? "grelu" : spec.solver;
  metrics.n = norm_data.n();
  metrics.d = norm_data.dim();
  metrics.c = classes;
  metrics.patterns = patterns.size();

  SerializedModel model;
  model.scaler = scaler;
  const SolverReport* solver_report = nullptr;

  GReLUConfig grelu_config;
  grelu_config.lambda = spec.lambda;
  grelu_config.variant = spec.variant;
  if (spec.tol) grelu_config.grad_tol = *spec.tol;
  if (spec.max_iters) grelu_config.max_iters = *spec.max_iters;

  SolverReport grelu_report;
  ALResult al_result;
  ModelDecomposition decomposition;

  const bool relu_solver = spec.command == "train" && spec.solver == "relu";
  const bool decompose = spec.command == "decompose";

  if (relu_solver) {
    ALConfig config;
    config.inner.lambda = spec.lambda;
    config.inner.variant = spec.variant;
    if (spec.tol) {
      config.gap_tol = *spec.tol;
      config.stat_tol = *spec.tol;
    }
    if (spec.max_iters) config.total_inner_budget = *spec.max_iters;
    al_result = solve_relu(norm_data, patterns, config);
    solver_report = &al_result.report;
    model.kind = NetworkKind::ReLU;
    model.relu = relu_to_network(al_result.weights, patterns, spec.drop_tol);
  } else {
    auto [u, report] = solve_grelu(norm_data, patterns, grelu_config);
    grelu_report = std::move(report);
    solver_report = &grelu_report;
    if (decompose) {
      CdaConfig cda;
      cda.rho = spec.rho;
      decomposition = decompose_model(u, patterns, x_norm, cda);
      metrics.blowup = decomposition.aggregate_blowup;
      metrics.max_residual = decomposition.max_residual;
      model.kind = NetworkKind::ReLU;
      model.relu = relu_to_network(decomposition.weights, patterns, spec.drop_tol);
    } else {
      model.kind = NetworkKind::GReLU;
      model.grelu = grelu_to_network(u, patterns, spec.drop_tol);
    }
  }

  // Recompute reported numbers from the model in the normalized space.
  if (model.kind == NetworkKind::GReLU) {
    const auto blocks = detail::rebuild_blocks(model.grelu.gates, model.grelu.W1,
                                               model.grelu.W2, patterns, x_norm, classes);
    metrics.objective_final =
        grelu_objective(blocks.positive, patterns, x_norm, norm_data.targets, spec.lambda);
    metrics.group_norm = blocks.positive.group_norm();
    BlockWeights grad;
    make_grelu_smooth(patterns, x_norm, norm_data.targets)(blocks.positive, &grad);
    metrics.stationarity_sq = min_norm_subgrad_sq(blocks.positive, grad, spec.lambda);
  } else {
    require(model.relu.gates.size() > 0,
            "pipeline: relu model lost its gate provenance");
    Eigen::MatrixXd w1_cols = model.relu.W1.transpose();
    const auto blocks = detail::rebuild_blocks(model.relu.gates, w1_cols, model.relu.W2,
                                               patterns, x_norm, classes);
    const Eigen::MatrixXd pred =
        apply_expanded(patterns, x_norm, blocks.positive) -
        apply_expanded(patterns, x_norm, blocks.negative);
    const double normalizer = static_cast<double>(metrics.n) * static_cast<double>(classes);
    metrics.objective_final =
        0.5 * (pred - norm_data.targets).squaredNorm() / normalizer +
        spec.lambda * (blocks.positive.group_norm() + blocks.negative.group_norm());
    metrics.group_norm = blocks.positive.group_norm() + blocks.negative.group_norm();
    metrics.constraint_gap_value =
        constraint_gap(blocks.positive, blocks.negative, patterns, x_norm);
    if (relu_solver) {
      metrics.stationarity_sq = al_result.final_stat_sq;
    } else {
      // Decomposition preserves v - w = u, so the gated stationarity of the
      // model is still well defined.
      BlockWeights u_eff = blocks.positive;
      u_eff.mat -= blocks.negative.mat;
      BlockWeights grad;
      make_grelu_smooth(patterns, x_norm, norm_data.targets)(u_eff, &grad);
      metrics.stationarity_sq = min_norm_subgrad_sq(u_eff, grad, spec.lambda);
    }
  }

  metrics.status = solver_report->status;
  metrics.iterations = solver_report->iterations;
  metrics.data_passes = solver_report->data_passes;
  if (!solver_report->objective_trace.empty()) {
    metrics.objective_initial = solver_report->objective_trace.front();
    metrics.objective_min = *std::min_element(solver_report->objective_trace.begin(),
                                              solver_report->objective_trace.end());
    metrics.trace_length = static_cast<Eigen::Index>(solver_report->objective_trace.size());
  }

  // Denormalize so the serialized model predicts on raw features.
  if (model.kind == NetworkKind::GReLU) {
    model.grelu.W1 = denormalize_weights(BlockWeights(model.grelu.W1, 1), scaler).mat;
    model.grelu.gates = denormalize_weights(BlockWeights(model.grelu.gates, 1), scaler).mat;
  } else {
    model.relu.W1 =
        denormalize_weights(BlockWeights(model.relu.W1.transpose(), 1), scaler).mat.transpose();
    if (model.relu.gates.size() > 0)
      model.relu.gates = denormalize_weights(BlockWeights(model.relu.gates, 1), scaler).mat;
  }

  auto predict = [&](const Eigen::MatrixXd& x) {
    return model.kind == NetworkKind::GReLU ? predict_grelu(model.grelu, x)
                                            : predict_relu(model.relu, x);
  };
  metrics.train_accuracy = accuracy(predict(train->features), train->targets);
  if (test) metrics.test_accuracy = accuracy(predict(test->features), test->targets);

  metrics.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();

  RunResult result;
  result.metrics = metrics;
  result.model = std::move(model);
  result.metrics_json = metrics_to_json(result.metrics);
  return result;
}

}  // namespace cvxrelu
