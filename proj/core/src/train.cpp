#include "flowrbm/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flowrbm/error.hpp"

namespace flowrbm {
namespace {

ParamGradient contrastive_gradient(const RbmParams& params, const Eigen::MatrixXd& positives,
                                   const Eigen::MatrixXd& negatives) {
  const Eigen::VectorXd pos_w = Eigen::VectorXd::Constant(positives.rows(), 1.0 / positives.rows());
  const Eigen::VectorXd neg_w = Eigen::VectorXd::Constant(negatives.rows(), -1.0 / negatives.rows());
  return weighted_free_energy_grad(params, positives, pos_w) + weighted_free_energy_grad(params, negatives, neg_w);
}

double contrastive_gap(const RbmParams& params, const Eigen::MatrixXd& positives, const Eigen::MatrixXd& negatives) {
  return free_energies(params, positives).mean() - free_energies(params, negatives).mean();
}

Eigen::MatrixXd advance_chains(const RbmParams& params, Eigen::MatrixXd states, int k, Rng& rng) {
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    states.row(r) = gibbs_chain(params, states.row(r).transpose(), k, rng).transpose();
  }
  return states;
}

void check_batch(const RbmParams& params, const BinaryDataset& batch) {
  batch.validate();
  if (batch.dim() != params.visible()) throw ContractViolation("batch dimension does not match D");
}

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.index(i)]);
  }
  return order;
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::CD:
      return "cd";
    case Method::PCD:
      return "pcd";
    case Method::MPF1Flip:
      return "mpf1";
    case Method::FMPF:
      return "fmpf";
    case Method::PMPF:
      return "pmpf";
    case Method::FPMPF:
      return "fpmpf";
    case Method::ExactML:
      return "exact";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::CD, Method::PCD, Method::MPF1Flip, Method::FMPF, Method::PMPF, Method::FPMPF,
                   Method::ExactML}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown training method '" + name + "'");
}

bool uses_persistent_chains(Method method) {
  return method == Method::PCD || method == Method::PMPF || method == Method::FPMPF;
}

TrainConfig TrainConfig::defaults_for(Method method) {
  TrainConfig config;
  config.method = method;
  const bool contrastive = method == Method::CD || method == Method::PCD;
  config.batch_size = contrastive ? 100 : 25;
  config.n_chains = config.batch_size;
  return config;
}

void TrainConfig::validate(Eigen::Index dataset_size) const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (batch_size > dataset_size) {
    throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                      std::to_string(dataset_size));
  }
  if (n_chains < 1) throw ConfigError("chain count must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

ChainPool init_pool(const BinaryDataset& data, int n_chains, Rng& rng) {
  data.validate();
  if (n_chains < 1) throw ConfigError("chain count must be >= 1");
  ChainPool pool{Eigen::MatrixXd(n_chains, data.dim()), ChainPool::Origin::DataInitialized};
  for (int r = 0; r < n_chains; ++r) {
    pool.states.row(r) = data.rows.row(static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(data.size()))));
  }
  return pool;
}

ParamGradient cd_k_update(const RbmParams& params, const BinaryDataset& batch, int k, Rng& rng) {
  check_batch(params, batch);
  if (k < 1) throw ConfigError("CD needs k >= 1");
  const Eigen::MatrixXd negatives = advance_chains(params, batch.rows, k, rng);
  return contrastive_gradient(params, batch.rows, negatives);
}

PcdStep pcd_update(const RbmParams& params, const BinaryDataset& batch, const ChainPool& pool, int k, Rng& rng) {
  check_batch(params, batch);
  if (k < 1) throw ConfigError("PCD needs k >= 1");
  if (pool.size() < 1 || pool.states.cols() != params.visible()) throw ConfigError("PCD needs an initialised pool");
  PcdStep step;
  step.pool.states = advance_chains(params, pool.states, k, rng);
  step.pool.origin = ChainPool::Origin::Persisted;
  step.gradient = contrastive_gradient(params, batch.rows, step.pool.states);
  step.objective = contrastive_gap(params, batch.rows, step.pool.states);
  return step;
}

MpfStep mpf_update(const RbmParams& params, const RbmParams& prev_params, const BinaryDataset& batch,
                   const TransitionSpec& spec, const std::optional<ChainPool>& pool, int k, Rng& rng) {
  check_batch(params, batch);
  spec.validate(params.visible());
  MpfStep step;
  step.pool = pool;
  if (std::holds_alternative<OneBitFlip>(spec.connectivity)) {
    step.flow = one_bit_flip_flow(params, batch);
    return step;
  }
  const auto* fact = std::get_if<Factorized>(&spec.connectivity);
  if (!fact) throw ConfigError("mpf_update supports one-bit-flip and factorized connectivity");
  if (k < 1) throw ConfigError("factorized MPF needs k >= 1");

  std::vector<Eigen::MatrixXd> parts;
  if (fact->persistent) {
    if (!pool || pool->size() < 1 || pool->states.cols() != params.visible()) {
      throw ConfigError("persistent MPF needs an initialised chain pool");
    }
    ChainPool advanced{advance_chains(prev_params, pool->states, k, rng), ChainPool::Origin::Persisted};
    parts.push_back(advanced.states);
    step.pool = std::move(advanced);
  }
  if (!fact->persistent || fact->combine_nonpersistent) {
    Eigen::MatrixXd starts(fact->sample_count, params.visible());
    for (int r = 0; r < fact->sample_count; ++r) starts.row(r) = batch.rows.row(r % batch.size());
    parts.push_back(advance_chains(prev_params, std::move(starts), k, rng));
  }

  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.rows();
  BinaryDataset samples{Eigen::MatrixXd(total, params.visible()), "model samples", batch.binarize_threshold};
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    samples.rows.middleRows(offset, p.rows()) = p;
    offset += p.rows();
  }
  step.sample_count = total;
  step.flow = factorized_flow(params, prev_params, batch, samples);
  return step;
}

ParamGradient exact_nll_gradient(const RbmParams& params, const BinaryDataset& data) {
  check_batch(params, data);
  const Eigen::VectorXd model_p = exact_visible_log_probs(params).array().exp();
  const Eigen::VectorXd data_w = Eigen::VectorXd::Constant(data.size(), 1.0 / data.size());
  return weighted_free_energy_grad(params, data.rows, data_w) -
         weighted_free_energy_grad(params, all_states(params.visible()), model_p);
}

TransitionSpec transition_spec_for(const TrainConfig& config) {
  TransitionSpec spec;
  switch (config.method) {
    case Method::MPF1Flip:
      spec.connectivity = OneBitFlip{};
      break;
    case Method::FMPF:
      spec.connectivity = Factorized{config.n_chains, false, false};
      break;
    case Method::PMPF:
      spec.connectivity = Factorized{config.n_chains, true, false};
      break;
    case Method::FPMPF:
      spec.connectivity = Factorized{config.n_chains, true, true};
      break;
    default:
      throw ConfigError("method " + method_name(config.method) + " is not an MPF variant");
  }
  return spec;
}

FitResult fit(const RbmParams& params0, const BinaryDataset& data, const TrainConfig& config,
              const EvalHook& eval_hook) {
  params0.validate();
  check_batch(params0, data);
  config.validate(data.size());

  FitResult result{params0, {}};
  RbmParams& params = result.params;
  Rng rng(config.seed);
  std::optional<ChainPool> pool;
  if (uses_persistent_chains(config.method)) pool = init_pool(data, config.n_chains, rng);
  const bool mpf = config.method == Method::MPF1Flip || config.method == Method::FMPF ||
                   config.method == Method::PMPF || config.method == Method::FPMPF;
  const TransitionSpec spec = mpf ? transition_spec_for(config) : TransitionSpec{};

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Eigen::Index> order = shuffled_indices(data.size(), rng);
    EpochRecord record;
    record.epoch = epoch;
    double objective_sum = 0.0;
    int batches = 0;

    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(config.batch_size));
      const BinaryDataset batch =
          data.subset(std::vector<Eigen::Index>(order.begin() + static_cast<std::ptrdiff_t>(first),
                                                order.begin() + static_cast<std::ptrdiff_t>(last)));
      ParamGradient grad;
      switch (config.method) {
        case Method::CD: {
          const Eigen::MatrixXd negatives = advance_chains(params, batch.rows, config.k, rng);
          grad = contrastive_gradient(params, batch.rows, negatives);
          objective_sum += contrastive_gap(params, batch.rows, negatives);
          break;
        }
        case Method::PCD: {
          PcdStep step = pcd_update(params, batch, *pool, config.k, rng);
          grad = std::move(step.gradient);
          pool = std::move(step.pool);
          objective_sum += step.objective;
          break;
        }
        case Method::ExactML: {
          grad = exact_nll_gradient(params, batch);
          objective_sum -= exact_avg_log_likelihood(params, batch);
          break;
        }
        default: {
          const RbmParams prev = params;
          MpfStep step = mpf_update(params, prev, batch, spec, pool, config.k, rng);
          grad = std::move(step.flow.gradient);
          pool = std::move(step.pool);
          objective_sum += step.flow.objective;
          record.overflows += step.flow.overflows;
          break;
        }
      }
      ++batches;
      apply_gradient(params, grad, config.learning_rate);
      if (!params.all_finite()) {
        std::ostringstream msg;
        msg << "parameters became non-finite at epoch " << epoch << ", batch " << batches << " (method "
            << method_name(config.method) << ", lr " << config.learning_rate << ")";
        for (const auto& r : result.trace.epochs) {
          msg << "\n  epoch " << r.epoch << " objective " << r.objective << " overflows " << r.overflows;
        }
        throw TrainingDiverged(msg.str());
      }
    }

    record.objective = objective_sum / batches;
    if (eval_hook && config.eval_every > 0 && epoch % config.eval_every == 0) {
      record.loglik = eval_hook(epoch, params);
    }
    if (!config.deterministic) {
      record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.trace.epochs.push_back(record);
  }
  return result;
}

}  // namespace flowrbm
