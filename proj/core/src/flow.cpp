#include "flowrbm/flow.hpp"

#include <cmath>

#include "flowrbm/error.hpp"

namespace flowrbm {
namespace {

Eigen::MatrixXd sigmoid_matrix(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

Eigen::VectorXd softplus_rowsum(const Eigen::MatrixXd& x) {
  return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).rowwise().sum().matrix();
}

void check_dataset_for(const RbmParams& params, const BinaryDataset& data, const char* what) {
  data.validate();
  if (data.dim() != params.visible()) throw ContractViolation(std::string(what) + ": dimension does not match D");
}

}  // namespace

OddFunction OddFunction::custom(std::function<double(double)> fn) {
  if (!fn || !is_odd_on_grid(fn)) throw ContractViolation("custom function is not odd");
  return OddFunction(Kind::Custom, std::move(fn));
}

OddFunction OddFunction::parse(const std::string& name) {
  if (name == "zero") return zero();
  if (name == "identity") return identity();
  if (name == "tanh") return tanh();
  throw ConfigError("unknown odd function '" + name + "' (expected zero, identity or tanh)");
}

double OddFunction::operator()(double x) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::Identity:
      return x;
    case Kind::Tanh:
      return std::tanh(x);
    case Kind::Custom:
      return fn_(x);
  }
  return 0.0;
}

std::string OddFunction::name() const {
  switch (kind_) {
    case Kind::Zero:
      return "zero";
    case Kind::Identity:
      return "identity";
    case Kind::Tanh:
      return "tanh";
    case Kind::Custom:
      return "custom";
  }
  return "custom";
}

bool is_odd_on_grid(const std::function<double(double)>& fn, double span, int points) {
  if (fn(0.0) != 0.0) return false;
  for (int k = 0; k < points; ++k) {
    const double x = span * k / (points - 1);
    const double plus = fn(x);
    const double minus = fn(-x);
    if (std::abs(plus + minus) > 1e-12 * std::max(1.0, std::abs(plus))) return false;
  }
  return true;
}

void TransitionSpec::validate(int visible) const {
  if (const auto* f = std::get_if<Factorized>(&connectivity)) {
    if (f->sample_count < 1) throw ConfigError("factorized connectivity needs sample_count >= 1");
    if (f->combine_nonpersistent && !f->persistent) {
      throw ConfigError("combine_nonpersistent only applies to persistent factorized connectivity");
    }
  }
  if (std::holds_alternative<FullEnumeration>(connectivity) && visible > kMaxFullEnumerationVisible) {
    throw CapacityError("full enumeration connectivity needs D <= " + std::to_string(kMaxFullEnumerationVisible));
  }
}

double clamp_exponent(double exponent, int* overflows) {
  if (exponent > kFlowExponentClamp || exponent < -kFlowExponentClamp) {
    if (overflows) ++*overflows;
    return exponent > 0 ? kFlowExponentClamp : -kFlowExponentClamp;
  }
  return exponent;
}

double gamma_from_free_energies(double f_from, double f_to, double g, const OddFunction& odd, int* overflows) {
  if (g < 0.0) throw ContractViolation("connectivity weight must be nonnegative");
  if (g == 0.0) return 0.0;
  const double exponent = 0.5 * (odd(f_to - f_from) + 1.0) * (f_from - f_to);
  return g * std::exp(clamp_exponent(exponent, overflows));
}

double gamma(const RbmParams& params, const VisibleState& from, const VisibleState& to, double g,
             const OddFunction& odd, int* overflows) {
  if (from.size() != to.size()) throw ContractViolation("gamma: states differ in length");
  return gamma_from_free_energies(free_energy(params, from), free_energy(params, to), g, odd, overflows);
}

FlowValue one_bit_flip_flow(const RbmParams& params, const BinaryDataset& batch) {
  check_dataset_for(params, batch, "one_bit_flip_flow");
  const Eigen::MatrixXd& x = batch.rows;
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index h = params.hidden();
  const double inv_tau = 1.0 / params.tau;

  Eigen::MatrixXd pre = x * params.W;
  pre.rowwise() += params.c.transpose();
  const Eigen::VectorXd linear = x * params.b;
  const Eigen::VectorXd f_data = -linear * inv_tau - softplus_rowsum(pre * inv_tau);

  FlowValue out;
  // Accumulators for sum_i Gamma_i * dF(flipped_i)/dtheta, up to the -1/tau factor.
  Eigen::MatrixXd weighted_sig = Eigen::MatrixXd::Zero(n, h);
  Eigen::VectorXd gamma_total = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd dW_flip = Eigen::MatrixXd::Zero(d, h);
  Eigen::VectorXd db_flip_diag = Eigen::VectorXd::Zero(d);

  Eigen::MatrixXd pre_flip(n, h);
  Eigen::VectorXd rates(n);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::VectorXd delta = (1.0 - 2.0 * x.col(i).array()).matrix();
    pre_flip = pre + delta * params.W.row(i);
    const Eigen::VectorXd f_flip =
        -(linear + delta * params.b[i]) * inv_tau - softplus_rowsum(pre_flip * inv_tau);
    for (Eigen::Index r = 0; r < n; ++r) {
      rates[r] = std::exp(clamp_exponent(0.5 * (f_data[r] - f_flip[r]), &out.overflows));
    }
    out.objective += rates.sum();
    const Eigen::MatrixXd sig = sigmoid_matrix(pre_flip * inv_tau);
    weighted_sig.noalias() += rates.asDiagonal() * sig;
    gamma_total += rates;
    const Eigen::VectorXd signed_rates = rates.cwiseProduct(delta);
    dW_flip.row(i) += signed_rates.transpose() * sig;
    db_flip_diag[i] += signed_rates.sum();
  }

  const Eigen::MatrixXd sig_data = sigmoid_matrix(pre * inv_tau);
  // sum_i Gamma_i * (dF(d) - dF(flip_i)) with dF(v) = -(1/tau) [v, sig(v), v sig(v)'].
  const double scale = -inv_tau * 0.5 / static_cast<double>(n);
  ParamGradient grad;
  grad.db = -scale * db_flip_diag;  // the shared d terms cancel
  grad.dc = scale * (sig_data.transpose() * gamma_total - weighted_sig.colwise().sum().transpose());
  grad.dW = scale * (x.transpose() * gamma_total.asDiagonal() * sig_data - x.transpose() * weighted_sig - dW_flip);
  out.gradient = std::move(grad);
  out.objective /= static_cast<double>(n);
  return out;
}

FlowValue factorized_flow(const RbmParams& params, const RbmParams& prev_params, const BinaryDataset& batch,
                          const BinaryDataset& samples) {
  check_dataset_for(params, batch, "factorized_flow batch");
  check_dataset_for(params, samples, "factorized_flow samples");
  if (prev_params.visible() != params.visible() || prev_params.hidden() != params.hidden()) {
    throw ContractViolation("factorized_flow: previous parameters have a different shape");
  }
  FlowValue out;
  const Eigen::VectorXd data_gap = 0.5 * (free_energies(params, batch.rows) - free_energies(prev_params, batch.rows));
  const Eigen::VectorXd sample_gap =
      0.5 * (free_energies(prev_params, samples.rows) - free_energies(params, samples.rows));
  const Eigen::VectorXd data_w =
      data_gap.unaryExpr([&](double e) { return std::exp(clamp_exponent(e, &out.overflows)); });
  const Eigen::VectorXd sample_w =
      sample_gap.unaryExpr([&](double e) { return std::exp(clamp_exponent(e, &out.overflows)); });
  const double n_data = static_cast<double>(batch.size());
  const double n_samples = static_cast<double>(samples.size());
  const double j_data = data_w.sum() / n_data;
  const double j_samples = sample_w.sum() / n_samples;
  out.objective = j_data * j_samples;

  // dJ_D = mean_d w_d * dF(d)/2, dJ_S = -mean_s w_s * dF(s)/2.
  const Eigen::VectorXd data_coef = data_w * (0.5 * j_samples / n_data);
  const Eigen::VectorXd sample_coef = sample_w * (-0.5 * j_data / n_samples);
  out.gradient = weighted_free_energy_grad(params, batch.rows, data_coef) +
                 weighted_free_energy_grad(params, samples.rows, sample_coef);
  return out;
}

double enumerate_full_flow(const RbmParams& params, const Eigen::Ref<const Eigen::VectorXd>& data_distribution,
                           const Eigen::Ref<const Eigen::MatrixXd>& connectivity, const OddFunction& odd) {
  params.validate();
  const int d = params.visible();
  if (d > kMaxFullEnumerationVisible) throw CapacityError("enumerate_full_flow needs D <= 12");
  const Eigen::Index states = Eigen::Index{1} << d;
  if (data_distribution.size() != states) throw ContractViolation("data distribution must have 2^D entries");
  if (connectivity.rows() != states || connectivity.cols() != states) {
    throw ContractViolation("connectivity must be 2^D x 2^D");
  }
  if (!(connectivity.array() == connectivity.transpose().array()).all()) {
    throw ContractViolation("connectivity must be symmetric");
  }
  if ((connectivity.diagonal().array() != 0.0).any()) throw ContractViolation("connectivity diagonal must be zero");
  if ((connectivity.array() < 0.0).any()) throw ContractViolation("connectivity must be nonnegative");

  const Eigen::VectorXd f = free_energies(params, all_states(d));
  double total = 0.0;
  for (Eigen::Index j = 0; j < states; ++j) {
    if (data_distribution[j] <= 0.0) continue;
    double out_rate = 0.0;
    for (Eigen::Index i = 0; i < states; ++i) {
      if (data_distribution[i] > 0.0 || connectivity(i, j) == 0.0) continue;
      out_rate += gamma_from_free_energies(f[j], f[i], connectivity(i, j), odd);
    }
    total += data_distribution[j] * out_rate;
  }
  return total;
}

Eigen::MatrixXd one_bit_flip_connectivity(int visible) {
  if (visible > kMaxFullEnumerationVisible) throw CapacityError("dense connectivity needs D <= 12");
  const Eigen::Index states = Eigen::Index{1} << visible;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(states, states);
  for (Eigen::Index j = 0; j < states; ++j) {
    for (int bit = 0; bit < visible; ++bit) g(j ^ (Eigen::Index{1} << bit), j) = 1.0;
  }
  return g;
}

Eigen::MatrixXd full_connectivity(int visible) {
  if (visible > kMaxFullEnumerationVisible) throw CapacityError("dense connectivity needs D <= 12");
  const Eigen::Index states = Eigen::Index{1} << visible;
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(states, states);
  g.diagonal().setZero();
  return g;
}

Eigen::VectorXd empirical_distribution(const BinaryDataset& data) {
  data.validate();
  if (data.dim() > 24) throw CapacityError("empirical distribution needs D <= 24");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(Eigen::Index{1} << data.dim());
  for (Eigen::Index r = 0; r < data.size(); ++r) p[static_cast<Eigen::Index>(state_index(data.rows.row(r)))] += 1.0;
  return p / static_cast<double>(data.size());
}

}  // namespace flowrbm
