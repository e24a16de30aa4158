#include "flowtrain/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "flowrbm/error.hpp"
#include "flowrbm/eval.hpp"
#include "flowrbm/flow.hpp"
#include "flowrbm/io.hpp"
#include "flowrbm/model.hpp"
#include "flowrbm/oracle.hpp"
#include "flowrbm/train.hpp"

namespace flowrbm::cli {
namespace {

constexpr double kBalanceTolerance = 1e-10;
constexpr double kStationarityTolerance = 1e-10;
constexpr double kFlowEquivalenceTolerance = 1e-10;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

struct DataFlags {
  std::string path;
  double threshold = 0.5;
  int pool = 1;

  BinaryDataset load() const { return io::load_dataset(path, io::IdxOptions{threshold, pool}); }
};

void add_data_flags(CLI::App* cmd, DataFlags& flags, const std::string& name, bool required) {
  auto* opt = cmd->add_option(name, flags.path, "dataset: IDX image file or dense text matrix");
  if (required) opt->required();
  cmd->add_option("--threshold", flags.threshold, "IDX binarisation threshold on [0,1]-scaled pixels")
      ->capture_default_str();
  cmd->add_option("--pool", flags.pool, "IDX average-pool factor before thresholding (2: 28x28 -> 14x14)")
      ->capture_default_str();
}

RbmParams random_params(int visible, int hidden, double stddev, Rng& rng) {
  RbmParams p(visible, hidden);
  for (Eigen::Index j = 0; j < p.W.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.W.rows(); ++i) p.W(i, j) = rng.normal(0.0, stddev);
  }
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b[i] = rng.normal(0.0, stddev);
  for (Eigen::Index j = 0; j < p.c.size(); ++j) p.c[j] = rng.normal(0.0, stddev);
  return p;
}

/// Random dataset of even-parity states, so no two data states are one flip apart.
BinaryDataset separated_data(int visible, int n, Rng& rng) {
  io::SyntheticSpec spec{io::Parity{visible}, n, rng.engine()()};
  return io::generate_synthetic(spec);
}

struct TrainFlags {
  std::string method = "mpf1";
  int k = 1;
  double lr = 0.01;
  int epochs = 10;
  std::optional<int> batch_size;
  std::optional<int> chains;
  std::uint64_t seed = 0;
  DataFlags data;
  std::string out;
  std::string metrics;
  int eval_every = 0;
  bool deterministic = false;
  int hidden = 20;
  double init_std = 0.01;
  double tau = 1.0;
  std::string init_model;
};

int run_train(const TrainFlags& f, std::ostream& out) {
  const BinaryDataset data = f.data.load();
  TrainConfig config = TrainConfig::defaults_for(parse_method(f.method));
  config.k = f.k;
  config.learning_rate = f.lr;
  config.epochs = f.epochs;
  if (f.batch_size) config.batch_size = *f.batch_size;
  config.batch_size = std::min<int>(config.batch_size, static_cast<int>(data.size()));
  config.n_chains = f.chains ? *f.chains : config.batch_size;
  config.seed = f.seed;
  config.eval_every = f.eval_every;
  config.deterministic = f.deterministic;

  RbmParams params0;
  if (!f.init_model.empty()) {
    params0 = io::load_model(f.init_model);
  } else {
    // Initialisation draws from a stream separate from the training stream.
    Rng init_rng(f.seed ^ 0x5eed1417ULL);
    params0 = init_params(static_cast<int>(data.dim()), f.hidden, init_rng, f.init_std);
    params0.tau = f.tau;
  }

  EvalHook hook;
  if (f.eval_every > 0) {
    hook = [&](int, const RbmParams& p) -> std::optional<double> {
      if (std::min(p.visible(), p.hidden()) > kMaxEnumeratedUnits) return std::nullopt;
      return exact_avg_log_likelihood(p, data);
    };
  }
  const FitResult result = fit(params0, data, config, hook);
  io::save_model(f.out, result.params, io::Provenance{f.method, f.k, f.seed, f.epochs});
  const std::string metrics = f.metrics.empty() ? f.out + ".csv" : f.metrics;
  io::write_trace_csv(metrics, result.trace);
  out << "trained " << f.method << " on " << data.size() << "x" << data.dim() << " for " << f.epochs
      << " epochs; model " << f.out << ", metrics " << metrics << "\n";
  if (!result.trace.epochs.empty()) {
    const EpochRecord& last = result.trace.epochs.back();
    out << "final objective " << fmt(last.objective) << " overflows " << last.overflows;
    if (last.loglik) out << " loglik " << fmt(*last.loglik);
    out << "\n";
  }
  return kOk;
}

struct EvalFlags {
  std::string model;
  DataFlags data;
  std::string estimator = "exact";
  int ais_temps = 10000;
  int ais_chains = 100;
  int ais_steps = 1;
  int csl_samples = 1000;
  int csl_burn_in = 2000;
  int csl_thinning = 10;
  std::uint64_t seed = 0;
  std::string base_data;
};

int run_eval(const EvalFlags& f, std::ostream& out) {
  const RbmParams params = io::load_model(f.model);
  const BinaryDataset data = f.data.load();
  if (data.dim() != params.visible()) throw ConfigError("dataset dimension does not match the model");
  LikelihoodEstimate est;
  if (f.estimator == "exact") {
    est = exact_log_likelihood(params, data);
  } else if (f.estimator == "ais") {
    AisConfig cfg;
    cfg.n_temperatures = f.ais_temps;
    cfg.n_chains = f.ais_chains;
    cfg.transitions_per_temp = f.ais_steps;
    cfg.seed = f.seed;
    cfg.base_visible_bias =
        base_visible_bias(f.base_data.empty() ? data : io::load_dataset(f.base_data, {f.data.threshold, f.data.pool}));
    est = ais_avg_log_likelihood(params, data, cfg);
  } else {
    CslConfig cfg{f.csl_samples, f.csl_burn_in, f.csl_thinning, f.seed};
    est = csl_log_likelihood(params, data, cfg);
  }
  out << "estimator " << estimate_method_name(est.method) << " loglik " << fmt(est.value) << " stderr "
      << fmt(est.std_error) << " n " << data.size() << "\n";
  return kOk;
}

struct SampleFlags {
  std::string model;
  std::string out;
  int n = 25;
  int steps = 100;
  int grid = 5;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  DataFlags init;
};

int run_sample(const SampleFlags& f, std::ostream& out) {
  const RbmParams params = io::load_model(f.model);
  std::optional<BinaryDataset> init;
  if (!f.init.path.empty()) init = f.init.load();
  io::SampleOptions options{f.n, f.steps, f.grid, f.seed, f.width, f.height, init ? &*init : nullptr};
  io::export_samples_pgm(f.out, params, options);
  out << "wrote " << f.n << " samples to " << f.out << "\n";
  return kOk;
}

struct OracleFlags {
  std::string check = "balance";
  int dim = 6;
  int hidden = 4;
  int trials = 100;
  std::string odd = "zero";
  std::uint64_t seed = 0;
  double sigma = 1.0;
  std::string csv;
};

int run_oracle(const OracleFlags& f, std::ostream& out) {
  if (f.dim < 1 || f.dim > kMaxOracleVisible) throw ConfigError("--dim must be in [1, 12]");
  if (f.hidden < 1) throw ConfigError("--hidden must be >= 1");
  if (f.trials < 1) throw ConfigError("--trials must be >= 1");
  Rng rng(f.seed);
  TransitionSpec spec;
  spec.odd = OddFunction::parse(f.odd);
  std::ofstream csv;
  if (!f.csv.empty()) {
    csv.open(f.csv);
    if (!csv) throw std::runtime_error("cannot open " + f.csv);
  }

  if (f.check == "balance" || f.check == "stationarity" || f.check == "flow-equivalence") {
    if (csv.is_open()) csv << "trial,value\n";
    double worst = 0.0;
    for (int t = 0; t < f.trials; ++t) {
      const RbmParams params = random_params(f.dim, f.hidden, f.sigma, rng);
      double value = 0.0;
      if (f.check == "flow-equivalence") {
        const BinaryDataset data = separated_data(f.dim, 1 + static_cast<int>(rng.index(8)), rng);
        const double sparse = one_bit_flip_flow(params, data).objective;
        const double dense =
            enumerate_full_flow(params, empirical_distribution(data), one_bit_flip_connectivity(f.dim), spec.odd);
        value = std::abs(sparse - dense) / std::abs(dense);
      } else {
        const ExplicitChain chain = build_chain(params, spec);
        value = f.check == "balance" ? check_detailed_balance(chain, params) : stationarity_residual(chain, params);
      }
      worst = std::max(worst, value);
      if (csv.is_open()) csv << t << ',' << fmt(value) << '\n';
    }
    const double tol = f.check == "balance"        ? kBalanceTolerance
                       : f.check == "stationarity" ? kStationarityTolerance
                                                   : kFlowEquivalenceTolerance;
    const char* label = f.check == "balance"        ? "max detailed-balance violation"
                        : f.check == "stationarity" ? "max stationarity residual"
                                                    : "max relative objective difference";
    const bool ok = worst < tol;
    out << label << " " << fmt(worst) << " over " << f.trials << " trials (odd=" << f.odd << ", D=" << f.dim
        << ", H=" << f.hidden << "): " << (ok ? "PASS" : "FAIL") << " (tolerance " << fmt(tol) << ")\n";
    return ok ? kOk : kRuntimeFailure;
  }

  if (f.check == "taylor") {
    const std::vector<double> epsilons{1e-2, 1e-3, 1e-4};
    if (csv.is_open()) csv << "trial,epsilon,kl,prediction,relative_gap\n";
    int monotone = 0;
    for (int t = 0; t < f.trials; ++t) {
      const RbmParams params = random_params(f.dim, f.hidden, f.sigma, rng);
      const BinaryDataset data = separated_data(f.dim, 1 + static_cast<int>(rng.index(4)), rng);
      const TaylorReport report = taylor_check(build_chain(params, spec), data, epsilons);
      double prev = INFINITY;
      bool ok = true;
      for (const TaylorRow& row : report.rows) {
        const double gap = std::abs(row.kl / row.epsilon - report.flow_rate) / report.flow_rate;
        ok = ok && gap < prev;
        prev = gap;
        if (csv.is_open()) {
          csv << t << ',' << fmt(row.epsilon) << ',' << fmt(row.kl) << ',' << fmt(row.prediction) << ',' << fmt(gap)
              << '\n';
        }
      }
      monotone += ok;
    }
    const bool ok = monotone == f.trials;
    out << "taylor ratio |KL/eps - J|/J decreasing in " << monotone << "/" << f.trials
        << " trials: " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kOk : kRuntimeFailure;
  }
  throw ConfigError("unknown oracle check '" + f.check + "'");
}

struct SynthFlags {
  std::string generator = "bars";
  int side = 4;
  int dim = 6;
  int hidden = 4;
  int n = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string teacher_model;
  double teacher_std = 1.0;
};

int run_synth(const SynthFlags& f, std::ostream& out) {
  io::SyntheticSpec spec;
  spec.n_samples = f.n;
  spec.seed = f.seed;
  if (f.generator == "bars") {
    spec.generator = io::Bars{f.side};
  } else if (f.generator == "parity") {
    spec.generator = io::Parity{f.dim};
  } else {
    RbmParams teacher;
    if (!f.teacher_model.empty()) {
      teacher = io::load_model(f.teacher_model);
    } else {
      Rng rng(f.seed ^ 0x7eac4e5ULL);
      teacher = random_params(f.dim, f.hidden, f.teacher_std, rng);
    }
    spec.generator = io::TeacherRbm{teacher};
  }
  const BinaryDataset data = io::generate_synthetic(spec);
  io::save_dense(f.out, data);
  out << "wrote " << data.size() << "x" << data.dim() << " " << data.source << " to " << f.out << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and evaluate Bernoulli RBMs with minimum probability flow and contrastive divergence"};
  app.name("flowtrain");
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "fit an RBM and write the model and a CSV trace");
  train->add_option("--method", tf.method, "training method")
      ->check(CLI::IsMember({"cd", "pcd", "mpf1", "fmpf", "pmpf", "fpmpf", "exact"}))
      ->capture_default_str();
  train->add_option("--k", tf.k, "Gibbs sweeps per update (CD/PCD/FMPF/PMPF/FPMPF)")->capture_default_str();
  train->add_option("--lr", tf.lr, "learning rate")->capture_default_str();
  train->add_option("--epochs", tf.epochs, "passes over the data")->capture_default_str();
  train->add_option("--batch-size", tf.batch_size, "minibatch size (default 25 for MPF, 100 for CD/PCD)");
  train->add_option("--chains", tf.chains, "persistent chains / sample count (default: batch size)");
  train->add_option("--seed", tf.seed, "random seed")->capture_default_str();
  add_data_flags(train, tf.data, "--data", true);
  train->add_option("--out", tf.out, "output model file")->required();
  train->add_option("--metrics", tf.metrics, "CSV trace path (default: <out>.csv)");
  train->add_option("--eval-every", tf.eval_every, "exact log-likelihood every N epochs (0: never)")
      ->capture_default_str();
  train->add_flag("--deterministic", tf.deterministic, "zero wall-clock fields for byte-identical outputs");
  train->add_option("--hidden", tf.hidden, "hidden units")->capture_default_str();
  train->add_option("--init-std", tf.init_std, "stddev of initial weights")->capture_default_str();
  train->add_option("--tau", tf.tau, "temperature")->capture_default_str();
  train->add_option("--init-model", tf.init_model, "start from this model instead of a random one");

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "estimate the average log-likelihood of a dataset");
  eval->add_option("--model", ef.model, "model file")->required();
  add_data_flags(eval, ef.data, "--data", true);
  eval->add_option("--estimator", ef.estimator, "likelihood estimator")
      ->check(CLI::IsMember({"exact", "ais", "csl"}))
      ->capture_default_str();
  eval->add_option("--ais-temps", ef.ais_temps, "AIS inverse temperatures")->capture_default_str();
  eval->add_option("--ais-chains", ef.ais_chains, "AIS chains")->capture_default_str();
  eval->add_option("--ais-steps", ef.ais_steps, "AIS Gibbs transitions per temperature")->capture_default_str();
  eval->add_option("--ais-base-data", ef.base_data, "dataset for the AIS base biases (default: --data)");
  eval->add_option("--csl-samples", ef.csl_samples, "CSL hidden samples")->capture_default_str();
  eval->add_option("--csl-burn-in", ef.csl_burn_in, "CSL burn-in sweeps")->capture_default_str();
  eval->add_option("--csl-thinning", ef.csl_thinning, "CSL sweeps between kept samples")->capture_default_str();
  eval->add_option("--seed", ef.seed, "random seed")->capture_default_str();

  SampleFlags sf;
  auto* sample = app.add_subcommand("sample", "run Gibbs chains and write a PGM grid of samples");
  sample->add_option("--model", sf.model, "model file")->required();
  sample->add_option("--out", sf.out, "output PGM")->required();
  sample->add_option("--n", sf.n, "number of chains")->capture_default_str();
  sample->add_option("--steps", sf.steps, "Gibbs sweeps per chain")->capture_default_str();
  sample->add_option("--grid", sf.grid, "images per grid row")->capture_default_str();
  sample->add_option("--seed", sf.seed, "random seed")->capture_default_str();
  sample->add_option("--width", sf.width, "image width (default sqrt(D))");
  sample->add_option("--height", sf.height, "image height (default sqrt(D))");
  add_data_flags(sample, sf.init, "--init-data", false);

  OracleFlags of;
  auto* oracle = app.add_subcommand("oracle", "check the flow dynamics on enumerable state spaces");
  oracle->add_option("--check", of.check, "property to check")
      ->check(CLI::IsMember({"balance", "stationarity", "taylor", "flow-equivalence"}))
      ->capture_default_str();
  oracle->add_option("--dim", of.dim, "visible units (<= 12)")->capture_default_str();
  oracle->add_option("--hidden", of.hidden, "hidden units")->capture_default_str();
  oracle->add_option("--trials", of.trials, "random instances")->capture_default_str();
  oracle->add_option("--odd", of.odd, "odd function in the rate")
      ->check(CLI::IsMember({"zero", "identity", "tanh"}))
      ->capture_default_str();
  oracle->add_option("--seed", of.seed, "random seed")->capture_default_str();
  oracle->add_option("--sigma", of.sigma, "stddev of random parameters")->capture_default_str();
  oracle->add_option("--csv", of.csv, "write per-trial results here");

  SynthFlags yf;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dense-text dataset");
  synth->add_option("--generator", yf.generator, "generator")
      ->check(CLI::IsMember({"bars", "parity", "teacher"}))
      ->capture_default_str();
  synth->add_option("--side", yf.side, "bars grid side")->capture_default_str();
  synth->add_option("--dim", yf.dim, "parity/teacher visible units")->capture_default_str();
  synth->add_option("--hidden", yf.hidden, "teacher hidden units")->capture_default_str();
  synth->add_option("--n", yf.n, "samples")->capture_default_str();
  synth->add_option("--seed", yf.seed, "random seed")->capture_default_str();
  synth->add_option("--out", yf.out, "output dense text file")->required();
  synth->add_option("--teacher-model", yf.teacher_model, "teacher model file (default: random teacher)");
  synth->add_option("--teacher-std", yf.teacher_std, "stddev of a random teacher's parameters")
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (train->parsed()) return run_train(tf, out);
    if (eval->parsed()) return run_eval(ef, out);
    if (sample->parsed()) return run_sample(sf, out);
    if (oracle->parsed()) return run_oracle(of, out);
    if (synth->parsed()) return run_synth(yf, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  err << app.help();
  return kUsage;
}

}  // namespace flowrbm::cli
