#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <variant>

#include "flowrbm/dataset.hpp"
#include "flowrbm/model.hpp"

namespace flowrbm {

/// The odd function o(.) in the generalised rate
///   Gamma(to <- from) = g * exp( (o(F_to - F_from) + 1)/2 * (F_from - F_to) ).
/// Any odd o keeps exp(-F) stationary; o = 0 is the classic MPF rate.
class OddFunction {
 public:
  enum class Kind { Zero, Identity, Tanh, Custom };

  static OddFunction zero() { return OddFunction(Kind::Zero, {}); }
  static OddFunction identity() { return OddFunction(Kind::Identity, {}); }
  static OddFunction tanh() { return OddFunction(Kind::Tanh, {}); }
  /// Throws ContractViolation if `fn` is not odd on a symmetric grid.
  static OddFunction custom(std::function<double(double)> fn);
  /// "zero", "identity" or "tanh".
  static OddFunction parse(const std::string& name);

  double operator()(double x) const;
  Kind kind() const { return kind_; }
  std::string name() const;

 private:
  OddFunction(Kind kind, std::function<double(double)> fn) : kind_(kind), fn_(std::move(fn)) {}

  Kind kind_;
  std::function<double(double)> fn_;
};

/// Checks o(-x) == -o(x) and o(0) == 0 on a grid over [-span, span].
bool is_odd_on_grid(const std::function<double(double)>& fn, double span = 50.0, int points = 1001);

/// Connect each state to the D states one bit flip away.
struct OneBitFlip {};

/// Independence-chain connectivity g_ij = g_i, approximated by samples from the
/// model at the previous parameters.
struct Factorized {
  int sample_count = 1;
  bool persistent = false;
  /// With `persistent`, also draw fresh data-initialised samples and use both sets.
  bool combine_nonpersistent = false;
};

/// Every pair of states connected with g = 1. Only enumerable for small D.
struct FullEnumeration {};

inline constexpr int kMaxFullEnumerationVisible = 12;

struct TransitionSpec {
  std::variant<OneBitFlip, Factorized, FullEnumeration> connectivity = OneBitFlip{};
  OddFunction odd = OddFunction::zero();

  void validate(int visible) const;
  bool is_factorized() const { return std::holds_alternative<Factorized>(connectivity); }
};

/// Flow objective and its gradient. `objective` excludes the time-step scale,
/// which the learning rate absorbs.
struct FlowValue {
  double objective = 0.0;
  ParamGradient gradient;
  /// Exponents clamped to +-kFlowExponentClamp while computing this value.
  int overflows = 0;
};

inline constexpr double kFlowExponentClamp = 500.0;

/// Clamps an exponent to +-kFlowExponentClamp, bumping `overflows` if it had to.
double clamp_exponent(double exponent, int* overflows);

/// Rate from free energies: g * exp(((o(F_to - F_from) + 1)/2) * (F_from - F_to)).
double gamma_from_free_energies(double f_from, double f_to, double g, const OddFunction& odd,
                                int* overflows = nullptr);

/// Rate of flow into `to` out of `from` under connectivity weight g.
double gamma(const RbmParams& params, const VisibleState& from, const VisibleState& to, double g,
             const OddFunction& odd, int* overflows = nullptr);

/// Single-bit-flip MPF objective
///   (1/|B|) sum_d sum_{i one flip from d} exp((F(d) - F(i))/2)
/// and its exact gradient. Neighbour free energies are updated incrementally
/// from the cached hidden pre-activations of d, O(|B| D H) overall.
FlowValue one_bit_flip_flow(const RbmParams& params, const BinaryDataset& batch);

/// Factorised MPF: J = J_D * J_S with
///   J_D = mean_d exp((F(d;theta) - F(d;prev))/2)
///   J_S = mean_s exp((F(s;prev) - F(s;theta))/2),
/// samples s drawn from the model at `prev_params`. Exact gradient of J.
FlowValue factorized_flow(const RbmParams& params, const RbmParams& prev_params, const BinaryDataset& batch,
                          const BinaryDataset& samples);

/// Exact enumerated flow from data states to non-data states,
///   sum_{j: p_j > 0} sum_{i: p_j == 0} p_j Gamma_ij,
/// with unit time step. `data_distribution` has 2^D entries in canonical
/// state order; `connectivity` is a symmetric 2^D x 2^D matrix with zero diagonal.
double enumerate_full_flow(const RbmParams& params, const Eigen::Ref<const Eigen::VectorXd>& data_distribution,
                           const Eigen::Ref<const Eigen::MatrixXd>& connectivity, const OddFunction& odd);

/// Dense g for single-bit-flip connectivity over {0,1}^D.
Eigen::MatrixXd one_bit_flip_connectivity(int visible);
/// Dense g = 1 off the diagonal.
Eigen::MatrixXd full_connectivity(int visible);

/// Empirical distribution of the dataset rows over {0,1}^D.
Eigen::VectorXd empirical_distribution(const BinaryDataset& data);

}  // namespace flowrbm
