#include "flowrbm/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "flowrbm/error.hpp"

namespace flowrbm {
namespace {

void check_chain_size(int visible) {
  if (visible > kMaxOracleVisible) {
    throw CapacityError("explicit chains need D <= " + std::to_string(kMaxOracleVisible));
  }
}

Eigen::VectorXd model_distribution(const RbmParams& params) { return exact_visible_log_probs(params).array().exp(); }

Eigen::VectorXd apply_series(const Eigen::MatrixXd& propagator, const Eigen::VectorXd& p0, double rate_time) {
  // sum_k Poisson(k; rate_time) P^k p0, truncated once the remaining mass is negligible.
  Eigen::VectorXd term = p0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p0.size());
  double mass = 0.0;
  const auto max_terms = static_cast<long>(rate_time + 12.0 * std::sqrt(rate_time) + 60.0);
  for (long k = 0; k <= max_terms; ++k) {
    const double log_w = -rate_time + k * std::log(rate_time) - std::lgamma(static_cast<double>(k) + 1.0);
    const double w = std::exp(log_w);
    out += w * term;
    mass += w;
    if (k > rate_time && 1.0 - mass < 1e-17) break;
    term = propagator * term;
  }
  return out;
}

Eigen::MatrixXd series_matrix(const Eigen::MatrixXd& propagator, double rate_time) {
  const Eigen::Index n = propagator.rows();
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  double mass = 0.0;
  for (long k = 0; k <= 200; ++k) {
    const double w = std::exp(-rate_time + k * std::log(rate_time) - std::lgamma(static_cast<double>(k) + 1.0));
    out += w * term;
    mass += w;
    if (k > rate_time && 1.0 - mass < 1e-17) break;
    term = propagator * term;
  }
  return out;
}

}  // namespace

ExplicitChain build_chain(const RbmParams& params, const TransitionSpec& spec) {
  params.validate();
  const int d = params.visible();
  check_chain_size(d);
  spec.validate(d);
  if (spec.is_factorized()) {
    throw ConfigError("explicit chains need symmetric connectivity; factorized g_ij = g_i is not supported");
  }
  const bool full = std::holds_alternative<FullEnumeration>(spec.connectivity);
  const Eigen::Index n = Eigen::Index{1} << d;
  const Eigen::VectorXd f = free_energies(params, all_states(d));

  ExplicitChain chain{Eigen::MatrixXd::Zero(n, n), d};
  for (Eigen::Index j = 0; j < n; ++j) {
    if (full) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j) chain.gamma(i, j) = gamma_from_free_energies(f[j], f[i], 1.0, spec.odd);
      }
    } else {
      for (int bit = 0; bit < d; ++bit) {
        const Eigen::Index i = j ^ (Eigen::Index{1} << bit);
        chain.gamma(i, j) = gamma_from_free_energies(f[j], f[i], 1.0, spec.odd);
      }
    }
    chain.gamma(j, j) = 0.0;
    chain.gamma(j, j) = -chain.gamma.col(j).sum();
  }
  return chain;
}

double check_detailed_balance(const ExplicitChain& chain, const RbmParams& params) {
  if (params.visible() != chain.visible) throw ContractViolation("chain and params differ in D");
  return check_detailed_balance(chain, model_distribution(params));
}

double check_detailed_balance(const ExplicitChain& chain, const Eigen::Ref<const Eigen::VectorXd>& distribution) {
  if (distribution.size() != chain.states()) throw ContractViolation("distribution length must equal state count");
  constexpr double tiny = std::numeric_limits<double>::min();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < chain.states(); ++j) {
    for (Eigen::Index i = j + 1; i < chain.states(); ++i) {
      const double into_j = chain.gamma(j, i) * distribution[i];
      const double into_i = chain.gamma(i, j) * distribution[j];
      if (into_j == 0.0 && into_i == 0.0) continue;
      worst = std::max(worst, std::abs(into_j - into_i) / std::max(std::abs(into_j), tiny));
    }
  }
  return worst;
}

double stationarity_residual(const ExplicitChain& chain, const RbmParams& params) {
  if (params.visible() != chain.visible) throw ContractViolation("chain and params differ in D");
  return stationarity_residual(chain, model_distribution(params));
}

double stationarity_residual(const ExplicitChain& chain, const Eigen::Ref<const Eigen::VectorXd>& distribution) {
  if (distribution.size() != chain.states()) throw ContractViolation("distribution length must equal state count");
  return (chain.gamma * distribution).cwiseAbs().maxCoeff();
}

Eigen::VectorXd evolve(const ExplicitChain& chain, const Eigen::Ref<const Eigen::VectorXd>& p0, double t) {
  if (p0.size() != chain.states()) throw ContractViolation("initial distribution length must equal state count");
  if (!(t >= 0.0) || !std::isfinite(t)) throw ContractViolation("evolve needs a finite t >= 0");
  if ((p0.array() < 0.0).any() || std::abs(p0.sum() - 1.0) > 1e-9) {
    throw ContractViolation("initial distribution must be nonnegative and sum to 1");
  }
  Eigen::VectorXd p = p0;
  const double rate = (-chain.gamma.diagonal()).maxCoeff();
  if (t == 0.0 || rate <= 0.0) return p;

  const Eigen::Index n = chain.states();
  const Eigen::MatrixXd propagator = Eigen::MatrixXd::Identity(n, n) + chain.gamma / rate;
  const double rate_time = rate * t;
  if (rate_time <= 1000.0) {
    p = apply_series(propagator, p, rate_time);
  } else {
    const int squarings = static_cast<int>(std::ceil(std::log2(rate_time)));
    Eigen::MatrixXd step = series_matrix(propagator, rate_time / std::ldexp(1.0, squarings));
    for (int s = 0; s < squarings; ++s) step = step * step;
    p = step * p;
  }
  if (!p.allFinite() || (p.array() < -1e-12).any() || std::abs(p.sum() - 1.0) > 1e-9) {
    throw EstimationError("master-equation integration lost probability mass (sum " + std::to_string(p.sum()) + ")");
  }
  return p.cwiseMax(0.0);
}

bool is_irreducible(const ExplicitChain& chain) {
  const Eigen::Index n = chain.states();
  auto reach_all = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!stack.empty()) {
      const Eigen::Index j = stack.back();
      stack.pop_back();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double rate = forward ? chain.gamma(i, j) : chain.gamma(j, i);
        if (i != j && rate > 0.0 && !seen[static_cast<std::size_t>(i)]) {
          seen[static_cast<std::size_t>(i)] = 1;
          ++count;
          stack.push_back(i);
        }
      }
    }
    return count == n;
  };
  return reach_all(true) && reach_all(false);
}

TaylorReport taylor_check(const ExplicitChain& chain, const BinaryDataset& data, const std::vector<double>& epsilons) {
  if (data.dim() != chain.visible) throw ContractViolation("data dimension does not match the chain");
  const Eigen::VectorXd p0 = empirical_distribution(data);
  if ((p0.array() > 0.0).all()) throw ContractViolation("taylor_check needs data covering a strict subset of states");

  TaylorReport report;
  for (Eigen::Index j = 0; j < chain.states(); ++j) {
    if (p0[j] <= 0.0) continue;
    double outflow = 0.0;
    for (Eigen::Index i = 0; i < chain.states(); ++i) {
      if (p0[i] == 0.0) outflow += chain.gamma(i, j);
    }
    report.flow_rate += p0[j] * outflow;
  }
  for (double eps : epsilons) {
    TaylorRow row{eps, 0.0, eps * report.flow_rate};
    if (eps > 0.0) {
      const Eigen::VectorXd pe = evolve(chain, p0, eps);
      for (Eigen::Index j = 0; j < chain.states(); ++j) {
        if (p0[j] > 0.0) row.kl += p0[j] * std::log(p0[j] / pe[j]);
      }
    }
    report.rows.push_back(row);
  }
  return report;
}

Eigen::MatrixXd gibbs_visible_kernel(const RbmParams& params) {
  params.validate();
  const int d = params.visible();
  const int h = params.hidden();
  if (d > 12 || h > 12) throw CapacityError("Gibbs kernel enumeration needs D, H <= 12");
  const Eigen::MatrixXd vis = all_states(d);
  const Eigen::MatrixXd hid = all_states(h);

  // log p(h | v): rows h, columns v.
  auto log_bernoulli = [](const Eigen::MatrixXd& bits, const Eigen::MatrixXd& pre) {
    // bits: S x K states, pre: C x K logits -> S x C of sum_k log Bern(bits_k; sigmoid(pre_k)).
    const Eigen::RowVectorXd norm = (pre.array().max(0.0) + (-pre.array().abs()).exp().log1p())
                                        .rowwise()
                                        .sum()
                                        .matrix()
                                        .transpose();
    Eigen::MatrixXd out = bits * pre.transpose();
    out.rowwise() -= norm;
    return out;
  };
  Eigen::MatrixXd hid_pre = vis * params.W;
  hid_pre.rowwise() += params.c.transpose();
  hid_pre /= params.tau;
  Eigen::MatrixXd vis_pre = hid * params.W.transpose();
  vis_pre.rowwise() += params.b.transpose();
  vis_pre /= params.tau;
  const Eigen::MatrixXd h_given_v = log_bernoulli(hid, hid_pre).array().exp();  // 2^H x 2^D
  const Eigen::MatrixXd v_given_h = log_bernoulli(vis, vis_pre).array().exp();  // 2^D x 2^H
  return v_given_h * h_given_v;
}

ParamGradient expected_cd_gradient(const RbmParams& params, const BinaryDataset& data, int k) {
  data.validate();
  if (k < 1) throw ConfigError("CD needs k >= 1");
  if (data.dim() != params.visible()) throw ContractViolation("data dimension does not match D");
  const Eigen::MatrixXd kernel = gibbs_visible_kernel(params);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(kernel.rows());
  for (Eigen::Index r = 0; r < data.size(); ++r) start[static_cast<Eigen::Index>(state_index(data.rows.row(r)))] += 1.0;
  start /= static_cast<double>(data.size());
  Eigen::VectorXd negative = start;
  for (int s = 0; s < k; ++s) negative = kernel * negative;
  const Eigen::MatrixXd states = all_states(params.visible());
  return weighted_free_energy_grad(params, states, start) - weighted_free_energy_grad(params, states, negative);
}

}  // namespace flowrbm
