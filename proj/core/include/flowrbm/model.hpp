#pragma once

#include <Eigen/Core>

#include <utility>

#include "flowrbm/dataset.hpp"
#include "flowrbm/rng.hpp"

namespace flowrbm {

/// Binary vectors are stored as double vectors holding exactly 0.0 or 1.0.
using VisibleState = Eigen::VectorXd;
using HiddenState = Eigen::VectorXd;

/// Bernoulli-Bernoulli RBM parameters. `W` is D x H.
///
/// The joint distribution is p(v,h) = exp(-E(v,h)/tau) / Z with
/// E(v,h) = -v'Wh - b'v - c'h.
struct RbmParams {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  double tau = 1.0;

  RbmParams() = default;
  RbmParams(int visible, int hidden, double temperature = 1.0)
      : W(Eigen::MatrixXd::Zero(visible, hidden)),
        b(Eigen::VectorXd::Zero(visible)),
        c(Eigen::VectorXd::Zero(hidden)),
        tau(temperature) {}

  int visible() const { return static_cast<int>(W.rows()); }
  int hidden() const { return static_cast<int>(W.cols()); }

  /// Shapes agree, D,H >= 1, tau > 0 and every entry finite.
  void validate() const;
  bool all_finite() const;

  /// Same distribution expressed at tau = 1 (all parameters divided by tau).
  RbmParams at_unit_temperature() const;

  /// Number of scalar parameters, D*H + D + H.
  Eigen::Index size() const { return W.size() + b.size() + c.size(); }
  /// Concatenation [vec(W) column-major, b, c]. tau is not a trainable entry.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::Ref<const Eigen::VectorXd>& flat);

  bool operator==(const RbmParams& other) const = default;
};

/// Derivative of a scalar with respect to (W, b, c).
struct ParamGradient {
  Eigen::MatrixXd dW;
  Eigen::VectorXd db;
  Eigen::VectorXd dc;

  ParamGradient() = default;
  ParamGradient(int visible, int hidden)
      : dW(Eigen::MatrixXd::Zero(visible, hidden)),
        db(Eigen::VectorXd::Zero(visible)),
        dc(Eigen::VectorXd::Zero(hidden)) {}
  static ParamGradient zeros_like(const RbmParams& params) {
    return ParamGradient(params.visible(), params.hidden());
  }

  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& operator-=(const ParamGradient& other);
  ParamGradient& operator*=(double scale);
  friend ParamGradient operator+(ParamGradient a, const ParamGradient& b) { return a += b; }
  friend ParamGradient operator-(ParamGradient a, const ParamGradient& b) { return a -= b; }
  friend ParamGradient operator*(ParamGradient a, double s) { return a *= s; }
  friend ParamGradient operator*(double s, ParamGradient a) { return a *= s; }

  Eigen::VectorXd flatten() const;
  double max_abs() const;
  bool all_finite() const;
};

/// theta <- theta - learning_rate * grad.
void apply_gradient(RbmParams& params, const ParamGradient& grad, double learning_rate);

/// W ~ Normal(0, stddev^2), b = c = 0.
RbmParams init_params(int visible, int hidden, Rng& rng, double stddev = 0.01);

/// Numerically safe log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

/// Energy of a joint configuration; temperature is not applied.
double energy(const RbmParams& params, const VisibleState& v, const HiddenState& h);

/// F(v) with exp(-F(v)) = sum_h exp(-E(v,h)/tau).
double free_energy(const RbmParams& params, const VisibleState& v);
/// F for every row of `states`.
Eigen::VectorXd free_energies(const RbmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& states);

/// p(h_j = 1 | v) for every j.
Eigen::VectorXd hidden_conditional(const RbmParams& params, const VisibleState& v);
/// p(v_i = 1 | h) for every i.
Eigen::VectorXd visible_conditional(const RbmParams& params, const HiddenState& h);
/// Row-wise p(h = 1 | v) for a batch of visible rows (N x H).
Eigen::MatrixXd hidden_probabilities(const RbmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& states);

/// One block-Gibbs sweep: h ~ p(h|v), then v' ~ p(v|h). Returns (v', h).
std::pair<VisibleState, HiddenState> gibbs_step(const RbmParams& params, const VisibleState& v, Rng& rng);
/// k sweeps starting from v; returns the final visible state.
VisibleState gibbs_chain(const RbmParams& params, VisibleState v, int steps, Rng& rng);
HiddenState sample_hidden(const RbmParams& params, const VisibleState& v, Rng& rng);
VisibleState sample_visible(const RbmParams& params, const HiddenState& h, Rng& rng);

/// dF(v)/dtheta.
ParamGradient free_energy_grad(const RbmParams& params, const VisibleState& v);
/// sum_n weights[n] * dF(states.row(n))/dtheta.
ParamGradient weighted_free_energy_grad(const RbmParams& params,
                                        const Eigen::Ref<const Eigen::MatrixXd>& states,
                                        const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Largest layer size `exact_log_partition` will enumerate.
inline constexpr int kMaxEnumeratedUnits = 25;

/// log Z by enumerating the smaller layer and marginalising the other.
/// Throws CapacityError when min(D, H) > kMaxEnumeratedUnits.
double exact_log_partition(const RbmParams& params);

/// Mean of log p(v) over the rows of `data`, with exact log Z.
double exact_avg_log_likelihood(const RbmParams& params, const BinaryDataset& data);
/// Same, reusing an already computed log Z.
double exact_avg_log_likelihood(const RbmParams& params, const BinaryDataset& data, double log_z);

/// log p(v) for all 2^D visible states in canonical order. Requires D <= 20.
Eigen::VectorXd exact_visible_log_probs(const RbmParams& params);

}  // namespace flowrbm
