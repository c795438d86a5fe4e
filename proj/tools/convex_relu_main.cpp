// Command-line front end for training two-layer ReLU and gated ReLU models
// by convex optimization: dataset ingestion, synthetic problem generation,
// solver invocation, cone decomposition, and JSON metric reports.

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cvxrelu/csv.hpp"
#include "cvxrelu/pipeline.hpp"
#include "cvxrelu/synth.hpp"

namespace {

struct CommonOptions {
  std::string data, test_data, target;
  bool one_hot = false;
  bool use_synth = false;
  long synth_n = 250, synth_test = 250, synth_d = 50, synth_teacher = 100;
  double synth_cond = 10.0;
  std::string solver = "grelu";
  std::string variant = "rfista";
  double lambda = 1e-4;
  long patterns = 100;
  std::uint64_t seed = 0;
  double tol = -1.0;
  long max_iters = -1;
  double rho = 1e-10;
  double drop_tol = 1e-8;
  std::string out, model_out, patterns_from;
  std::string gate_sampler = "gaussian";
  std::string image_shape;
};

void add_common_options(CLI::App* cmd, CommonOptions* opts, bool with_solver) {
  cmd->add_option("--data", opts->data, "Training data (csv)");
  cmd->add_flag("--synth", opts->use_synth, "Generate a realizable synthetic problem instead");
  cmd->add_option("--synth-n", opts->synth_n, "Synthetic training examples (default 250)");
  cmd->add_option("--synth-test", opts->synth_test, "Synthetic test examples (default 250)");
  cmd->add_option("--synth-d", opts->synth_d, "Synthetic feature count (default 50)");
  cmd->add_option("--synth-teacher", opts->synth_teacher, "Synthetic teacher width (default 100)");
  cmd->add_option("--synth-cond", opts->synth_cond, "Synthetic covariance condition number");
  cmd->add_option("--test-data", opts->test_data, "Held-out data (csv)");
  cmd->add_option("--target", opts->target, "Target column name or 0-based index (default: last)");
  cmd->add_flag("--one-hot", opts->one_hot, "One-hot encode a categorical target");
  if (with_solver)
    cmd->add_option("--solver", opts->solver, "grelu | relu")
        ->check(CLI::IsMember({"grelu", "relu"}));
  cmd->add_option("--variant", opts->variant, "rfista | fista | pgdls | pgd")
      ->check(CLI::IsMember({"rfista", "fista", "pgdls", "pgd"}));
  cmd->add_option("--lambda", opts->lambda, "Regularization strength (default 1e-4)");
  cmd->add_option("--patterns", opts->patterns, "Number of sampled gate vectors (default 100)");
  cmd->add_option("--seed", opts->seed, "RNG seed")->required();
  cmd->add_option("--tol", opts->tol,
                  "Solver tolerance (grelu: squared subgradient; relu: gap and stationarity)");
  cmd->add_option("--max-iters", opts->max_iters,
                  "Iteration cap (grelu: iterations; relu: total inner budget)");
  cmd->add_option("--out", opts->out, "Metrics report path (json); default stdout");
  cmd->add_option("--model-out", opts->model_out, "Serialized model path (json)");
  cmd->add_option("--patterns-from", opts->patterns_from,
                  "Model json whose first-layer activations augment the pattern set");
  cmd->add_option("--gate-sampler", opts->gate_sampler, "gaussian | patch:<h>x<w>");
  cmd->add_option("--image-shape", opts->image_shape, "<h>x<w>[x<c>] for patch sampling");
  cmd->add_option("--drop-tol", opts->drop_tol, "Neuron pruning threshold (default 1e-8)");
}

cvxrelu::SolverVariant parse_variant(const std::string& name) {
  if (name == "rfista") return cvxrelu::SolverVariant::RFista;
  if (name == "fista") return cvxrelu::SolverVariant::Fista;
  if (name == "pgdls") return cvxrelu::SolverVariant::PgdLs;
  return cvxrelu::SolverVariant::Pgd;
}

cvxrelu::RunSpec to_run_spec(const CommonOptions& opts, const std::string& command) {
  cvxrelu::RunSpec spec;
  spec.command = command;
  spec.data_path = opts.data;
  spec.test_data_path = opts.test_data;
  spec.use_synth = opts.use_synth;
  spec.synth.n_train = opts.synth_n;
  spec.synth.n_test = opts.synth_test;
  spec.synth.dim = opts.synth_d;
  spec.synth.teacher_width = opts.synth_teacher;
  spec.synth.cond = opts.synth_cond;
  spec.target_column = opts.target;
  spec.one_hot = opts.one_hot;
  spec.solver = opts.solver;
  spec.variant = parse_variant(opts.variant);
  spec.lambda = opts.lambda;
  spec.pattern_count = opts.patterns;
  spec.seed = opts.seed;
  if (opts.tol > 0) spec.tol = opts.tol;
  if (opts.max_iters > 0) spec.max_iters = static_cast<int>(opts.max_iters);
  spec.rho = opts.rho;
  spec.drop_tol = opts.drop_tol;
  spec.out_path = opts.out;
  spec.model_out = opts.model_out;
  spec.patterns_from = opts.patterns_from;
  spec.gate_sampler = opts.gate_sampler;
  if (!opts.image_shape.empty()) {
    std::stringstream ss(opts.image_shape);
    std::string part;
    std::vector<long> dims;
    while (std::getline(ss, part, 'x')) dims.push_back(std::stol(part));
    if (dims.size() < 2 || dims.size() > 3)
      throw CLI::ValidationError("--image-shape", "expected <h>x<w>[x<c>]");
    spec.image_height = dims[0];
    spec.image_width = dims[1];
    spec.image_channels = dims.size() == 3 ? dims[2] : 1;
  }
  return spec;
}

int emit(const cvxrelu::RunResult& result, const cvxrelu::RunSpec& spec) {
  const std::string text = result.metrics_json.dump(2) + "\n";
  if (spec.out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(spec.out_path);
    if (!out) throw std::runtime_error("cannot open " + spec.out_path);
    out << text;
  }
  if (!spec.model_out.empty()) cvxrelu::save_model(result.model, spec.model_out);
  return result.metrics.status == cvxrelu::SolveStatus::Converged ? 0 : 2;
}

int run_bench(const CommonOptions& opts, long n_seeds, const std::string& lambdas_csv,
              const std::string& out_dir, long threads) {
  std::vector<double> lambdas;
  if (lambdas_csv.empty()) {
    lambdas.push_back(opts.lambda);
  } else {
    std::stringstream ss(lambdas_csv);
    std::string part;
    while (std::getline(ss, part, ',')) lambdas.push_back(std::stod(part));
  }
  std::filesystem::create_directories(out_dir);

  struct Job {
    std::uint64_t seed;
    double lambda;
  };
  std::vector<Job> jobs;
  for (long s = 0; s < n_seeds; ++s)
    for (double lambda : lambdas)
      jobs.push_back({opts.seed + static_cast<std::uint64_t>(s), lambda});

  std::atomic<std::size_t> next{0};
  std::atomic<int> worst_exit{0};
  std::mutex io_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= jobs.size()) return;
      const Job& job = jobs[index];
      CommonOptions local = opts;
      local.seed = job.seed;
      local.lambda = job.lambda;
      std::ostringstream name;
      name << out_dir << "/report_seed" << job.seed << "_lambda" << job.lambda << ".json";
      local.out = name.str();
      local.model_out.clear();
      try {
        cvxrelu::RunSpec spec = to_run_spec(local, "train");
        const int code = emit(cvxrelu::run(spec), spec);
        int expected = worst_exit.load();
        while (code > expected && !worst_exit.compare_exchange_weak(expected, code)) {
        }
      } catch (const std::exception& err) {
        std::scoped_lock lock(io_mutex);
        std::cerr << "bench job seed=" << job.seed << " lambda=" << job.lambda
                  << " failed: " << err.what() << "\n";
        worst_exit.store(1);
      }
    }
  };

  const long n_threads =
      std::max(1L, std::min<long>(threads, static_cast<long>(jobs.size())));
  std::vector<std::thread> pool;
  for (long t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return worst_exit.load();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex training of two-layer ReLU and gated ReLU networks"};
  app.require_subcommand(1);

  CommonOptions train_opts, decomp_opts, bench_opts;

  CLI::App* train = app.add_subcommand("train", "Fit a model with the selected solver");
  add_common_options(train, &train_opts, /*with_solver=*/true);

  CLI::App* decomp = app.add_subcommand(
      "decompose", "Solve the gated problem, then decompose onto cone pairs to get a ReLU net");
  add_common_options(decomp, &decomp_opts, /*with_solver=*/false);
  decomp->add_option("--rho", decomp_opts.rho, "Decomposition penalty (default 1e-10)");

  CLI::App* synth = app.add_subcommand("synth", "Write a realizable synthetic dataset as csv");
  long synth_n = 250, synth_test = 250, synth_d = 50, synth_teacher = 100;
  double synth_cond = 10.0;
  std::uint64_t synth_seed = 0;
  std::string synth_out, synth_test_out;
  synth->add_option("--n", synth_n, "Training examples (default 250)");
  synth->add_option("--test-n", synth_test, "Test examples (default 250)");
  synth->add_option("--d", synth_d, "Features (default 50)");
  synth->add_option("--teacher", synth_teacher, "Teacher width (default 100)");
  synth->add_option("--cond", synth_cond, "Covariance condition number (default 10)");
  synth->add_option("--seed", synth_seed, "RNG seed")->required();
  synth->add_option("--out", synth_out, "Training csv path")->required();
  synth->add_option("--test-out", synth_test_out, "Test csv path");

  CLI::App* bench = app.add_subcommand(
      "bench", "Fan independent problems out across worker threads, one report per problem");
  add_common_options(bench, &bench_opts, /*with_solver=*/true);
  long bench_seeds = 1, bench_threads = static_cast<long>(std::thread::hardware_concurrency());
  std::string bench_lambdas, bench_out_dir = "bench-reports";
  bench->add_option("--seeds", bench_seeds, "Number of consecutive seeds starting at --seed");
  bench->add_option("--lambdas", bench_lambdas, "Comma-separated lambda grid");
  bench->add_option("--out-dir", bench_out_dir, "Directory for per-problem reports");
  bench->add_option("--threads", bench_threads, "Worker threads");

  try {
    app.parse(argc, argv);
    if (train->parsed()) {
      const cvxrelu::RunSpec spec = to_run_spec(train_opts, "train");
      return emit(cvxrelu::run(spec), spec);
    }
    if (decomp->parsed()) {
      const cvxrelu::RunSpec spec = to_run_spec(decomp_opts, "decompose");
      return emit(cvxrelu::run(spec), spec);
    }
    if (synth->parsed()) {
      cvxrelu::SynthParams params;
      params.n_train = synth_n;
      params.n_test = synth_test;
      params.dim = synth_d;
      params.teacher_width = synth_teacher;
      params.cond = synth_cond;
      params.seed = synth_seed;
      const cvxrelu::SynthProblem problem = cvxrelu::synth_realizable(params);
      cvxrelu::save_csv(problem.train, synth_out);
      if (!synth_test_out.empty()) cvxrelu::save_csv(problem.test, synth_test_out);
      return 0;
    }
    if (bench->parsed())
      return run_bench(bench_opts, bench_seeds, bench_lambdas, bench_out_dir, bench_threads);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
