#include "flowrbm/eval.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "flowrbm/error.hpp"

namespace flowrbm {
namespace {

Eigen::ArrayXXd softplus_array(const Eigen::ArrayXXd& x) { return x.max(0.0) + (-x.abs()).exp().log1p(); }

double log_mean_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double hi = x.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((x.array() - hi).exp().mean());
}

Eigen::MatrixXd bernoulli_matrix(const Eigen::MatrixXd& probs, Rng& rng) {
  Eigen::MatrixXd out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) out(r, c) = rng.bernoulli(probs(r, c)) ? 1.0 : 0.0;
  }
  return out;
}

Eigen::MatrixXd sigmoid_matrix(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

std::string estimate_method_name(EstimateMethod method) {
  switch (method) {
    case EstimateMethod::Exact:
      return "exact";
    case EstimateMethod::AIS:
      return "ais";
    case EstimateMethod::CSL:
      return "csl";
  }
  return "unknown";
}

void AisConfig::validate(int visible) const {
  if (n_temperatures < 2) throw ConfigError("AIS needs at least 2 temperatures");
  if (n_chains < 1) throw ConfigError("AIS needs at least one chain");
  if (transitions_per_temp < 1) throw ConfigError("AIS needs at least one transition per temperature");
  if (bootstrap_resamples < 1) throw ConfigError("AIS needs at least one bootstrap resample");
  if (base_visible_bias.size() != 0 && base_visible_bias.size() != visible) {
    throw ConfigError("AIS base visible bias length must equal D");
  }
}

Eigen::VectorXd base_visible_bias(const BinaryDataset& data, double clip) {
  data.validate();
  const Eigen::VectorXd mean = data.rows.colwise().mean().transpose();
  return mean.unaryExpr([clip](double p) {
    if (p <= 0.0) return -clip;
    if (p >= 1.0) return clip;
    return std::clamp(std::log(p / (1.0 - p)), -clip, clip);
  });
}

double base_log_partition(const Eigen::VectorXd& visible_bias, int hidden) {
  double log_z = hidden * std::log(2.0);
  for (Eigen::Index i = 0; i < visible_bias.size(); ++i) log_z += softplus(visible_bias[i]);
  return log_z;
}

LikelihoodEstimate ais_log_partition(const RbmParams& params, const AisConfig& cfg) {
  params.validate();
  cfg.validate(params.visible());
  const RbmParams target = params.at_unit_temperature();
  const Eigen::Index d = target.visible();
  const Eigen::Index chains = cfg.n_chains;
  const Eigen::VectorXd base_b =
      cfg.base_visible_bias.size() ? cfg.base_visible_bias : Eigen::VectorXd::Zero(d).eval();
  Rng rng(cfg.seed);

  // Unnormalised log marginal of the intermediate model at inverse temperature beta:
  //   (1-beta) b0'v + beta b'v + sum_j softplus(beta (c + W'v)_j).
  auto log_f = [&](const Eigen::MatrixXd& v, const Eigen::MatrixXd& pre, double beta) -> Eigen::VectorXd {
    return (1.0 - beta) * (v * base_b) + beta * (v * target.b) +
           softplus_array(beta * pre.array()).rowwise().sum().matrix();
  };

  Eigen::MatrixXd base_p = sigmoid_matrix(base_b.transpose().replicate(chains, 1));
  Eigen::MatrixXd v = bernoulli_matrix(base_p, rng);
  Eigen::VectorXd log_w = Eigen::VectorXd::Zero(chains);
  Eigen::MatrixXd pre(chains, target.hidden());
  const int steps = cfg.n_temperatures - 1;
  for (int k = 1; k <= steps; ++k) {
    const double beta_prev = static_cast<double>(k - 1) / steps;
    const double beta = static_cast<double>(k) / steps;
    pre = v * target.W;
    pre.rowwise() += target.c.transpose();
    log_w += log_f(v, pre, beta) - log_f(v, pre, beta_prev);
    if (k == steps) break;
    for (int t = 0; t < cfg.transitions_per_temp; ++t) {
      if (t > 0) {
        pre = v * target.W;
        pre.rowwise() += target.c.transpose();
      }
      const Eigen::MatrixXd h = bernoulli_matrix(sigmoid_matrix(beta * pre), rng);
      Eigen::MatrixXd vis_pre = beta * (h * target.W.transpose());
      vis_pre.rowwise() += ((1.0 - beta) * base_b + beta * target.b).transpose();
      v = bernoulli_matrix(sigmoid_matrix(vis_pre), rng);
    }
  }

  if (!log_w.allFinite() || log_w.maxCoeff() == -std::numeric_limits<double>::infinity()) {
    throw EstimationError("AIS produced no finite importance weights");
  }
  const double log_z0 = base_log_partition(base_b, target.hidden());
  LikelihoodEstimate est;
  est.method = EstimateMethod::AIS;
  est.value = log_z0 + log_mean_exp(log_w);

  Rng boot(cfg.seed ^ 0xa15b007ULL);
  Eigen::VectorXd resample(chains);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int r = 0; r < cfg.bootstrap_resamples; ++r) {
    for (Eigen::Index i = 0; i < chains; ++i) resample[i] = log_w[static_cast<Eigen::Index>(boot.index(chains))];
    const double value = log_mean_exp(resample);
    sum += value;
    sum_sq += value * value;
  }
  const double n = cfg.bootstrap_resamples;
  est.std_error = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / (n - 1))) : 0.0;
  return est;
}

LikelihoodEstimate ais_avg_log_likelihood(const RbmParams& params, const BinaryDataset& data, const AisConfig& cfg) {
  data.validate();
  LikelihoodEstimate log_z = ais_log_partition(params, cfg);
  return {-free_energies(params, data.rows).mean() - log_z.value, log_z.std_error, EstimateMethod::AIS};
}

void CslConfig::validate() const {
  if (n_hidden_samples < 1) throw ConfigError("CSL needs at least one hidden sample");
  if (burn_in < 0) throw ConfigError("CSL burn-in must be >= 0");
  if (thinning < 1) throw ConfigError("CSL thinning must be >= 1");
}

Eigen::MatrixXd collect_hidden_samples(const RbmParams& params, const CslConfig& cfg) {
  params.validate();
  cfg.validate();
  Rng rng(cfg.seed);
  VisibleState v(params.visible());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  v = gibbs_chain(params, std::move(v), cfg.burn_in, rng);
  Eigen::MatrixXd samples(cfg.n_hidden_samples, params.hidden());
  for (int s = 0; s < cfg.n_hidden_samples; ++s) {
    HiddenState h;
    for (int t = 0; t < cfg.thinning; ++t) std::tie(v, h) = gibbs_step(params, v, rng);
    samples.row(s) = h.transpose();
  }
  return samples;
}

LikelihoodEstimate csl_log_likelihood(const RbmParams& params, const BinaryDataset& data, const CslConfig& cfg) {
  return csl_log_likelihood(params, data, collect_hidden_samples(params, cfg));
}

LikelihoodEstimate csl_log_likelihood(const RbmParams& params, const BinaryDataset& data,
                                      const Eigen::Ref<const Eigen::MatrixXd>& hidden_samples) {
  params.validate();
  data.validate();
  if (hidden_samples.rows() < 1) throw ConfigError("CSL needs a nonempty hidden sample set");
  if (hidden_samples.cols() != params.hidden() || data.dim() != params.visible()) {
    throw ContractViolation("CSL: dimension mismatch");
  }
  // log P(v|h) = v'x - sum_i softplus(x_i) with x = (b + W h)/tau.
  Eigen::MatrixXd x = hidden_samples * params.W.transpose();
  x.rowwise() += params.b.transpose();
  x /= params.tau;
  const Eigen::RowVectorXd norm = softplus_array(x.array()).rowwise().sum().matrix().transpose();
  Eigen::MatrixXd log_cond = data.rows * x.transpose();
  log_cond.rowwise() -= norm;

  Eigen::VectorXd per_datum(data.size());
  for (Eigen::Index r = 0; r < data.size(); ++r) per_datum[r] = log_mean_exp(log_cond.row(r).transpose());
  LikelihoodEstimate est;
  est.method = EstimateMethod::CSL;
  est.value = per_datum.mean();
  const double n = static_cast<double>(per_datum.size());
  est.std_error = n > 1 ? std::sqrt((per_datum.array() - est.value).square().sum() / (n - 1) / n) : 0.0;
  return est;
}

LikelihoodEstimate exact_log_likelihood(const RbmParams& params, const BinaryDataset& data) {
  return {exact_avg_log_likelihood(params, data), 0.0, EstimateMethod::Exact};
}

double kl_visible(const RbmParams& p_params, const RbmParams& q_params) {
  if (p_params.visible() != q_params.visible()) throw ContractViolation("kl_visible: models differ in D");
  if (p_params.visible() > kMaxKlVisible) throw CapacityError("kl_visible needs D <= 12");
  const Eigen::VectorXd log_p = exact_visible_log_probs(p_params);
  const Eigen::VectorXd log_q = exact_visible_log_probs(q_params);
  const double kl = (log_p.array().exp() * (log_p - log_q).array()).sum();
  return std::max(kl, 0.0);
}

}  // namespace flowrbm
