#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

#include "flowrbm/dataset.hpp"
#include "flowrbm/model.hpp"

namespace flowrbm {

enum class EstimateMethod { Exact, AIS, CSL };

std::string estimate_method_name(EstimateMethod method);

/// A log-likelihood or log-partition value in nats. `std_error` is zero
/// exactly when the value was computed by enumeration.
struct LikelihoodEstimate {
  double value = 0.0;
  double std_error = 0.0;
  EstimateMethod method = EstimateMethod::Exact;
};

/// Annealed importance sampling from a zero-weight base RBM to the target
/// along a linear inverse-temperature ladder.
struct AisConfig {
  int n_temperatures = 1000;
  int n_chains = 100;
  int transitions_per_temp = 1;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 200;
  /// Visible biases of the base model; empty means all zero.
  Eigen::VectorXd base_visible_bias;

  void validate(int visible) const;
};

/// Base-model visible biases from the data marginals: clipped log-odds.
Eigen::VectorXd base_visible_bias(const BinaryDataset& data, double clip = 4.0);

/// log Z of the zero-weight, zero-hidden-bias base model used by AIS.
double base_log_partition(const Eigen::VectorXd& visible_bias, int hidden);

/// AIS estimate of log Z with a bootstrap standard error over chains.
/// Throws EstimationError if every importance weight is zero.
LikelihoodEstimate ais_log_partition(const RbmParams& params, const AisConfig& cfg);

/// Mean log-likelihood of `data` using an AIS estimate of log Z.
LikelihoodEstimate ais_avg_log_likelihood(const RbmParams& params, const BinaryDataset& data, const AisConfig& cfg);

struct CslConfig {
  int n_hidden_samples = 1000;
  int burn_in = 2000;
  int thinning = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Hidden states from one long Gibbs chain: burn-in, then one state every
/// `thinning` sweeps. Rows are samples.
Eigen::MatrixXd collect_hidden_samples(const RbmParams& params, const CslConfig& cfg);

/// Conservative sampling-based likelihood, log mean_{h in S} P(v|h) averaged
/// over the data, with the standard error across data points.
LikelihoodEstimate csl_log_likelihood(const RbmParams& params, const BinaryDataset& data, const CslConfig& cfg);
LikelihoodEstimate csl_log_likelihood(const RbmParams& params, const BinaryDataset& data,
                                      const Eigen::Ref<const Eigen::MatrixXd>& hidden_samples);

/// Exact log-likelihood wrapped as an estimate.
LikelihoodEstimate exact_log_likelihood(const RbmParams& params, const BinaryDataset& data);

inline constexpr int kMaxKlVisible = 12;

/// KL(p || q) over the visible marginals, by enumeration (D <= 12).
double kl_visible(const RbmParams& p_params, const RbmParams& q_params);

}  // namespace flowrbm
