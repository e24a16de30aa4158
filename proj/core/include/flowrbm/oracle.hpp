#pragma once

#include <Eigen/Core>

#include <vector>

#include "flowrbm/dataset.hpp"
#include "flowrbm/flow.hpp"
#include "flowrbm/model.hpp"

namespace flowrbm {

/// Dense rate matrix of the probability-flow dynamics dp/dt = Gamma p over
/// all 2^D visible states. Entry (i, j) is the rate from state j into state i;
/// the diagonal makes every column sum to zero. States follow the canonical
/// order (bit k of the index is visible unit k).
struct ExplicitChain {
  Eigen::MatrixXd gamma;
  int visible = 0;

  Eigen::Index states() const { return gamma.rows(); }
};

inline constexpr int kMaxOracleVisible = 12;

/// Builds Gamma from flow rates with one-bit-flip or full connectivity.
/// Throws CapacityError for D > 12 and ConfigError for factorised connectivity,
/// whose g_ij = g_i is not symmetric.
ExplicitChain build_chain(const RbmParams& params, const TransitionSpec& spec);

/// Max over connected pairs of |G_ji p_i - G_ij p_j| / max(|G_ji p_i|, tiny),
/// with p the exact model distribution.
double check_detailed_balance(const ExplicitChain& chain, const RbmParams& params);
/// Same check against an arbitrary distribution.
double check_detailed_balance(const ExplicitChain& chain, const Eigen::Ref<const Eigen::VectorXd>& distribution);

/// ||Gamma p||_inf for the exact model distribution p.
double stationarity_residual(const ExplicitChain& chain, const RbmParams& params);
double stationarity_residual(const ExplicitChain& chain, const Eigen::Ref<const Eigen::VectorXd>& distribution);

/// exp(t Gamma) p0 by uniformisation (squaring the uniformised propagator
/// for long horizons). Entries above -1e-12 are clipped to zero.
Eigen::VectorXd evolve(const ExplicitChain& chain, const Eigen::Ref<const Eigen::VectorXd>& p0, double t);

/// True if every state reaches every other through positive rates.
bool is_irreducible(const ExplicitChain& chain);

struct TaylorRow {
  double epsilon = 0.0;
  double kl = 0.0;          ///< KL(p0 || p_epsilon) after exact evolution
  double prediction = 0.0;  ///< epsilon * flow_rate
};

struct TaylorReport {
  /// Total first-order outflow from data to non-data states per unit time.
  double flow_rate = 0.0;
  std::vector<TaylorRow> rows;
};

/// Compares exact KL after evolving the empirical distribution of `data` for
/// time epsilon against the first-order prediction epsilon * J.
TaylorReport taylor_check(const ExplicitChain& chain, const BinaryDataset& data, const std::vector<double>& epsilons);

/// One-sweep block-Gibbs kernel over visible states: column v holds p(v' | v).
Eigen::MatrixXd gibbs_visible_kernel(const RbmParams& params);

/// Expected CD-k gradient, mean_d [dF(d) - E_{v ~ K^k(.|d)} dF(v)], with the
/// Gibbs kernel enumerated exactly.
ParamGradient expected_cd_gradient(const RbmParams& params, const BinaryDataset& data, int k);

}  // namespace flowrbm
