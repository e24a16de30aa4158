#include "flowrbm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flowrbm/error.hpp"
#include "parallel.hpp"

namespace flowrbm {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

void check_visible(const RbmParams& params, const Eigen::Index size) {
  require(size == params.W.rows(), "visible state length does not match W rows");
}

void check_hidden(const RbmParams& params, const Eigen::Index size) {
  require(size == params.W.cols(), "hidden state length does not match W cols");
}

template <typename Derived>
Eigen::ArrayXXd softplus_array(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

// sum_k softplus(x_k) = sum max(x_k,0) + log prod (1 + e^-|x_k|), one log per 512-entry segment.
double softplus_sum(const Eigen::VectorXd& x) {
  constexpr Eigen::Index kSegment = 512;
  double total = x.array().max(0.0).sum();
  for (Eigen::Index at = 0; at < x.size(); at += kSegment) {
    const auto seg = x.segment(at, std::min(kSegment, x.size() - at)).array();
    total += std::log((1.0 + (-seg.abs()).exp()).prod());
  }
  return total;
}

double log_sum_exp(const std::vector<double>& terms) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double t : terms) hi = std::max(hi, t);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

/// log sum_{x in {0,1}^n} exp(bias_x'x + sum_k softplus(bias_y[k] + (M x)[k]))
/// where M is (other x n). Enumerates in fixed-size Gray-code blocks; each
/// block is reduced independently and the blocks are combined in order.
double log_sum_enumerated(const Eigen::MatrixXd& M, const Eigen::VectorXd& bias_x, const Eigen::VectorXd& bias_y) {
  const int n = static_cast<int>(bias_x.size());
  const std::uint64_t total = std::uint64_t{1} << n;
  const int block_bits = std::min(n, 12);
  const std::uint64_t block = std::uint64_t{1} << block_bits;
  const std::uint64_t blocks = total / block;

  std::vector<double> block_lse(blocks);
  detail::parallel_for(blocks, [&](std::size_t blk) {
    // Within a block the low bits follow a Gray code; the high bits are fixed.
    const std::uint64_t high = static_cast<std::uint64_t>(blk) << block_bits;
    Eigen::VectorXd pre = bias_y;
    double linear = 0.0;
    for (int j = block_bits; j < n; ++j) {
      if ((high >> j) & 1U) {
        pre += M.col(j);
        linear += bias_x[j];
      }
    }
    std::vector<double> terms(block);
    std::uint64_t gray = 0;
    for (std::uint64_t i = 0; i < block; ++i) {
      if (i > 0) {
        const std::uint64_t next = i ^ (i >> 1);
        const int bit = std::countr_zero(next ^ gray);
        if ((next >> bit) & 1U) {
          pre += M.col(bit);
          linear += bias_x[bit];
        } else {
          pre -= M.col(bit);
          linear -= bias_x[bit];
        }
        gray = next;
      }
      terms[i] = linear + softplus_sum(pre);
    }
    block_lse[blk] = log_sum_exp(terms);
  });
  return log_sum_exp(block_lse);
}

}  // namespace

void RbmParams::validate() const {
  require(W.rows() >= 1 && W.cols() >= 1, "RBM needs D >= 1 and H >= 1");
  require(b.size() == W.rows(), "visible bias length must equal D");
  require(c.size() == W.cols(), "hidden bias length must equal H");
  require(tau > 0.0 && std::isfinite(tau), "temperature must be positive and finite");
  require(all_finite(), "RBM parameters must be finite");
}

bool RbmParams::all_finite() const {
  return W.allFinite() && b.allFinite() && c.allFinite() && std::isfinite(tau);
}

RbmParams RbmParams::at_unit_temperature() const {
  RbmParams out = *this;
  out.W /= tau;
  out.b /= tau;
  out.c /= tau;
  out.tau = 1.0;
  return out;
}

Eigen::VectorXd RbmParams::flatten() const {
  Eigen::VectorXd flat(size());
  flat << Eigen::Map<const Eigen::VectorXd>(W.data(), W.size()), b, c;
  return flat;
}

void RbmParams::assign_flat(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  require(flat.size() == size(), "flat parameter vector has wrong length");
  Eigen::Map<Eigen::VectorXd>(W.data(), W.size()) = flat.head(W.size());
  b = flat.segment(W.size(), b.size());
  c = flat.tail(c.size());
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  dW += other.dW;
  db += other.db;
  dc += other.dc;
  return *this;
}

ParamGradient& ParamGradient::operator-=(const ParamGradient& other) {
  dW -= other.dW;
  db -= other.db;
  dc -= other.dc;
  return *this;
}

ParamGradient& ParamGradient::operator*=(double scale) {
  dW *= scale;
  db *= scale;
  dc *= scale;
  return *this;
}

Eigen::VectorXd ParamGradient::flatten() const {
  Eigen::VectorXd flat(dW.size() + db.size() + dc.size());
  flat << Eigen::Map<const Eigen::VectorXd>(dW.data(), dW.size()), db, dc;
  return flat;
}

double ParamGradient::max_abs() const {
  return std::max({dW.size() ? dW.cwiseAbs().maxCoeff() : 0.0, db.size() ? db.cwiseAbs().maxCoeff() : 0.0,
                   dc.size() ? dc.cwiseAbs().maxCoeff() : 0.0});
}

bool ParamGradient::all_finite() const { return dW.allFinite() && db.allFinite() && dc.allFinite(); }

void apply_gradient(RbmParams& params, const ParamGradient& grad, double learning_rate) {
  require(grad.dW.rows() == params.W.rows() && grad.dW.cols() == params.W.cols(), "gradient shape mismatch");
  params.W -= learning_rate * grad.dW;
  params.b -= learning_rate * grad.db;
  params.c -= learning_rate * grad.dc;
}

RbmParams init_params(int visible, int hidden, Rng& rng, double stddev) {
  RbmParams params(visible, hidden);
  for (Eigen::Index j = 0; j < params.W.cols(); ++j) {
    for (Eigen::Index i = 0; i < params.W.rows(); ++i) params.W(i, j) = rng.normal(0.0, stddev);
  }
  return params;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double energy(const RbmParams& params, const VisibleState& v, const HiddenState& h) {
  check_visible(params, v.size());
  check_hidden(params, h.size());
  return -v.dot(params.W * h) - params.b.dot(v) - params.c.dot(h);
}

double free_energy(const RbmParams& params, const VisibleState& v) {
  check_visible(params, v.size());
  const Eigen::ArrayXd pre = (params.c + params.W.transpose() * v).array() / params.tau;
  return -params.b.dot(v) / params.tau - softplus_array(pre).sum();
}

Eigen::VectorXd free_energies(const RbmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& states) {
  check_visible(params, states.cols());
  Eigen::MatrixXd pre = states * params.W;
  pre.rowwise() += params.c.transpose();
  pre /= params.tau;
  const Eigen::VectorXd soft = softplus_array(pre.array()).rowwise().sum().matrix();
  return -(states * params.b) / params.tau - soft;
}

Eigen::VectorXd hidden_conditional(const RbmParams& params, const VisibleState& v) {
  check_visible(params, v.size());
  Eigen::VectorXd pre = (params.c + params.W.transpose() * v) / params.tau;
  return pre.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::VectorXd visible_conditional(const RbmParams& params, const HiddenState& h) {
  check_hidden(params, h.size());
  Eigen::VectorXd pre = (params.b + params.W * h) / params.tau;
  return pre.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::MatrixXd hidden_probabilities(const RbmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& states) {
  check_visible(params, states.cols());
  Eigen::MatrixXd pre = states * params.W;
  pre.rowwise() += params.c.transpose();
  pre /= params.tau;
  return pre.unaryExpr([](double x) { return sigmoid(x); });
}

HiddenState sample_hidden(const RbmParams& params, const VisibleState& v, Rng& rng) {
  const Eigen::VectorXd p = hidden_conditional(params, v);
  HiddenState h(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) h[j] = rng.bernoulli(p[j]) ? 1.0 : 0.0;
  return h;
}

VisibleState sample_visible(const RbmParams& params, const HiddenState& h, Rng& rng) {
  const Eigen::VectorXd p = visible_conditional(params, h);
  VisibleState v(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) v[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
  return v;
}

std::pair<VisibleState, HiddenState> gibbs_step(const RbmParams& params, const VisibleState& v, Rng& rng) {
  HiddenState h = sample_hidden(params, v, rng);
  VisibleState next = sample_visible(params, h, rng);
  return {std::move(next), std::move(h)};
}

VisibleState gibbs_chain(const RbmParams& params, VisibleState v, int steps, Rng& rng) {
  for (int s = 0; s < steps; ++s) v = gibbs_step(params, v, rng).first;
  return v;
}

ParamGradient free_energy_grad(const RbmParams& params, const VisibleState& v) {
  const Eigen::VectorXd s = hidden_conditional(params, v);
  const double scale = -1.0 / params.tau;
  ParamGradient g;
  g.db = scale * v;
  g.dc = scale * s;
  g.dW = scale * (v * s.transpose());
  return g;
}

ParamGradient weighted_free_energy_grad(const RbmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                        const Eigen::Ref<const Eigen::VectorXd>& weights) {
  require(states.rows() == weights.size(), "one weight per state required");
  const Eigen::MatrixXd probs = hidden_probabilities(params, states);
  const double scale = -1.0 / params.tau;
  ParamGradient g;
  g.db = scale * (states.transpose() * weights);
  g.dc = scale * (probs.transpose() * weights);
  g.dW = scale * (states.transpose() * weights.asDiagonal() * probs);
  return g;
}

double exact_log_partition(const RbmParams& params) {
  params.validate();
  const RbmParams unit = params.at_unit_temperature();
  const int d = unit.visible();
  const int h = unit.hidden();
  if (std::min(d, h) > kMaxEnumeratedUnits) {
    throw CapacityError("exact log partition needs min(D,H) <= " + std::to_string(kMaxEnumeratedUnits) + " (got D=" +
                        std::to_string(d) + ", H=" + std::to_string(h) + "); use the AIS estimator instead");
  }
  if (h <= d) return log_sum_enumerated(unit.W, unit.c, unit.b);
  return log_sum_enumerated(unit.W.transpose(), unit.b, unit.c);
}

double exact_avg_log_likelihood(const RbmParams& params, const BinaryDataset& data) {
  return exact_avg_log_likelihood(params, data, exact_log_partition(params));
}

double exact_avg_log_likelihood(const RbmParams& params, const BinaryDataset& data, double log_z) {
  data.validate();
  return -free_energies(params, data.rows).mean() - log_z;
}

Eigen::VectorXd exact_visible_log_probs(const RbmParams& params) {
  params.validate();
  if (params.visible() > 20) throw CapacityError("visible enumeration needs D <= 20");
  const Eigen::VectorXd neg_f = -free_energies(params, all_states(params.visible()));
  const double hi = neg_f.maxCoeff();
  const double log_z = hi + std::log((neg_f.array() - hi).exp().sum());
  return neg_f.array() - log_z;
}

}  // namespace flowrbm
