#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowrbm/dataset.hpp"
#include "flowrbm/flow.hpp"
#include "flowrbm/model.hpp"
#include "flowrbm/rng.hpp"

namespace flowrbm {

enum class Method {
  CD,        ///< contrastive divergence, k Gibbs sweeps from the data
  PCD,       ///< persistent CD
  MPF1Flip,  ///< minimum probability flow, single-bit-flip connectivity
  FMPF,      ///< factorised MPF, samples from k sweeps started at the batch
  PMPF,      ///< factorised MPF, samples from persistent chains
  FPMPF,     ///< factorised MPF, persistent and batch-started samples combined
  ExactML,   ///< exact log-likelihood gradient by enumeration (small D only)
};

std::string method_name(Method method);
/// Accepts cd, pcd, mpf1, fmpf, pmpf, fpmpf, exact.
Method parse_method(const std::string& name);
bool uses_persistent_chains(Method method);

struct TrainConfig {
  Method method = Method::MPF1Flip;
  int k = 1;
  double learning_rate = 0.01;
  int epochs = 1;
  int batch_size = 25;
  /// Persistent chains (PCD, PMPF, FPMPF) and batch-started samples (FMPF, FPMPF).
  int n_chains = 25;
  std::uint64_t seed = 0;
  /// Call the evaluation hook every this many epochs; 0 disables it.
  int eval_every = 0;
  /// Zeroes wall-clock fields so repeated runs produce identical traces.
  bool deterministic = true;

  /// Batch size 25 for the MPF family, 100 for CD/PCD.
  static TrainConfig defaults_for(Method method);
  void validate(Eigen::Index dataset_size) const;
};

/// Visible states of a set of Markov chains, one per row.
struct ChainPool {
  enum class Origin { DataInitialized, Persisted };

  Eigen::MatrixXd states;
  Origin origin = Origin::DataInitialized;

  Eigen::Index size() const { return states.rows(); }
};

/// `n_chains` rows drawn uniformly (with replacement) from the data.
ChainPool init_pool(const BinaryDataset& data, int n_chains, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  /// Mean per-batch training objective: the flow objective for MPF methods,
  /// mean F(data) - mean F(negatives) for CD/PCD, NLL for ExactML.
  double objective = 0.0;
  int overflows = 0;
  std::optional<double> loglik;
  double seconds = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;

  bool operator==(const TrainTrace&) const = default;
};

/// CD-k gradient: mean_d [dF(d) - dF(d-)], d- after k Gibbs sweeps from d.
/// Subtracting it from theta raises the data likelihood.
ParamGradient cd_k_update(const RbmParams& params, const BinaryDataset& batch, int k, Rng& rng);

struct PcdStep {
  ParamGradient gradient;
  ChainPool pool;
  double objective = 0.0;
};

/// PCD gradient: mean over the batch of dF minus mean over the advanced pool of dF.
PcdStep pcd_update(const RbmParams& params, const BinaryDataset& batch, const ChainPool& pool, int k, Rng& rng);

struct MpfStep {
  FlowValue flow;
  std::optional<ChainPool> pool;
  /// Size of the sample set fed to the factorised objective (0 for 1-bit flip).
  Eigen::Index sample_count = 0;
};

/// One MPF gradient evaluation. Factorised variants draw their samples with k
/// Gibbs sweeps under `prev_params`; persistent variants need a pool.
MpfStep mpf_update(const RbmParams& params, const RbmParams& prev_params, const BinaryDataset& batch,
                   const TransitionSpec& spec, const std::optional<ChainPool>& pool, int k, Rng& rng);

/// Exact gradient of the mean negative log-likelihood,
/// mean_d dF(d) - E_model[dF(v)], by enumerating visible states.
ParamGradient exact_nll_gradient(const RbmParams& params, const BinaryDataset& data);

/// Connectivity used by `fit` for an MPF-family method.
TransitionSpec transition_spec_for(const TrainConfig& config);

/// Optional per-epoch evaluation; return a log-likelihood to record it.
using EvalHook = std::function<std::optional<double>(int epoch, const RbmParams& params)>;

struct FitResult {
  RbmParams params;
  TrainTrace trace;
};

/// Minibatch SGD over seeded shuffles, theta <- theta - lr * grad.
/// Throws TrainingDiverged if the parameters become non-finite.
FitResult fit(const RbmParams& params0, const BinaryDataset& data, const TrainConfig& config,
              const EvalHook& eval_hook = {});

}  // namespace flowrbm
