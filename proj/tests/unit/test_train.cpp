#include "support.hpp"

#include "flowrbm/error.hpp"
#include "flowrbm/oracle.hpp"
#include "flowrbm/train.hpp"

using namespace flowrbm;
using testing::random_data;
using testing::random_params;

namespace {

BinaryDataset symmetric_batch(int d) {
  BinaryDataset sym{Eigen::MatrixXd(2, d), "sym"};
  sym.rows.row(0).setZero();
  sym.rows.row(1).setOnes();
  return sym;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("method names round-trip") {
  for (Method m : {Method::CD, Method::PCD, Method::MPF1Flip, Method::FMPF, Method::PMPF, Method::FPMPF,
                   Method::ExactML}) {
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("sgd"), ConfigError);
  CHECK(uses_persistent_chains(Method::FPMPF));
  CHECK_FALSE(uses_persistent_chains(Method::FMPF));
  CHECK(TrainConfig::defaults_for(Method::CD).batch_size == 100);
  CHECK(TrainConfig::defaults_for(Method::FMPF).batch_size == 25);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate(100));
  CHECK_THROWS_AS(c.validate(10), ConfigError);
  c.batch_size = 5;
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(10), ConfigError);
  c.learning_rate = 0.1;
  c.k = 0;
  CHECK_THROWS_AS(c.validate(10), ConfigError);
}

TEST_CASE("cd_k_update at zero parameters averages to zero") {
  const RbmParams zero(4, 3);
  const BinaryDataset sym = symmetric_batch(4);
  Rng rng(30);
  const int draws = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(zero.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(zero.size());
  for (int s = 0; s < draws; ++s) {
    const Eigen::VectorXd g = cd_k_update(zero, sym, 1, rng).flatten();
    sum += g;
    sq += g.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::VectorXd se = ((sq / draws - mean.cwiseAbs2()).cwiseMax(0.0) / draws).cwiseSqrt();
  CHECK((mean.cwiseAbs().array() <= 3.0 * se.array() + 1e-12).all());
}

TEST_CASE("cd_k_update Monte Carlo mean matches the enumerated expectation") {
  Rng rng(31);
  const RbmParams p = random_params(4, 3, rng, 0.7);
  const BinaryDataset batch = random_data(3, 4, rng);
  const Eigen::VectorXd expected = expected_cd_gradient(p, batch, 1).flatten();
  const int draws = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(p.size());
  for (int s = 0; s < draws; ++s) {
    const Eigen::VectorXd g = cd_k_update(p, batch, 1, rng).flatten();
    sum += g;
    sq += g.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::VectorXd se = ((sq / draws - mean.cwiseAbs2()).cwiseMax(0.0) / draws).cwiseSqrt();
  CHECK(((mean - expected).cwiseAbs().array() <= 3.0 * se.array() + 1e-12).all());
}

TEST_CASE("long-run CD approaches the exact likelihood gradient") {
  Rng rng(32);
  const RbmParams p = random_params(4, 3, rng, 0.5);
  const BinaryDataset batch = random_data(5, 4, rng);
  const Eigen::VectorXd exact = exact_nll_gradient(p, batch).flatten();
  CHECK(testing::rel_error(expected_cd_gradient(p, batch, 500).flatten(), exact) < 1e-8);

  const int draws = 1000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(p.size());
  for (int s = 0; s < draws; ++s) {
    const Eigen::VectorXd g = cd_k_update(p, batch, 500, rng).flatten();
    sum += g;
    sq += g.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::VectorXd se = ((sq / draws - mean.cwiseAbs2()).cwiseMax(0.0) / draws).cwiseSqrt();
  CHECK(((mean - exact).cwiseAbs().array() <= 3.0 * se.array() + 1e-12).all());
}

TEST_CASE("exact NLL gradient matches finite differences") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const RbmParams p = random_params(4, 3, rng);
    const BinaryDataset data = random_data(6, 4, rng);
    const Eigen::VectorXd fd =
        testing::finite_difference(p, [&](const RbmParams& q) { return -exact_avg_log_likelihood(q, data); });
    CHECK(testing::rel_error(exact_nll_gradient(p, data).flatten(), fd) < 1e-6);
  }
}

TEST_CASE("persistent chains") {
  SUBCASE("first step from the batch coincides with CD-1") {
    Rng rng(34);
    const RbmParams p = random_params(5, 3, rng);
    const BinaryDataset batch = random_data(4, 5, rng);
    Rng a(77), b(77);
    const ParamGradient cd = cd_k_update(p, batch, 1, a);
    const PcdStep pcd = pcd_update(p, batch, ChainPool{batch.rows, ChainPool::Origin::DataInitialized}, 1, b);
    CHECK(pcd.gradient.flatten() == cd.flatten());
    CHECK(pcd.pool.origin == ChainPool::Origin::Persisted);
  }
  SUBCASE("zero parameters keep the pool uniform and the update unbiased") {
    const RbmParams zero(3, 2);
    const BinaryDataset sym = symmetric_batch(3);
    Rng rng(35);
    ChainPool pool = init_pool(sym, 8, rng);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(zero.size());
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(zero.size());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(8);
    const int steps = 5000;
    for (int s = 0; s < steps; ++s) {
      PcdStep step = pcd_update(zero, sym, pool, 1, rng);
      pool = std::move(step.pool);
      const Eigen::VectorXd g = step.gradient.flatten();
      sum += g;
      sq += g.cwiseAbs2();
      for (Eigen::Index r = 0; r < pool.size(); ++r) counts[static_cast<Eigen::Index>(state_index(pool.states.row(r)))] += 1;
    }
    const Eigen::VectorXd mean = sum / steps;
    const Eigen::VectorXd se = ((sq / steps - mean.cwiseAbs2()).cwiseMax(0.0) / steps).cwiseSqrt();
    CHECK((mean.cwiseAbs().array() <= 3.0 * se.array() + 1e-12).all());
    CHECK(testing::total_variation(counts / counts.sum(), Eigen::VectorXd::Constant(8, 0.125)) < 0.01);
  }
  SUBCASE("frozen parameters drive the pool to the model distribution") {
    Rng rng(36);
    const RbmParams p = random_params(4, 3, rng);
    const BinaryDataset batch = random_data(4, 4, rng);
    ChainPool pool = init_pool(batch, 256, rng);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(16);
    for (int sweep = 0; sweep < 10000; ++sweep) {
      PcdStep step = pcd_update(p, batch, pool, 1, rng);
      pool = std::move(step.pool);
      if (sweep < 100) continue;
      for (Eigen::Index r = 0; r < pool.size(); ++r) counts[static_cast<Eigen::Index>(state_index(pool.states.row(r)))] += 1;
    }
    CHECK(testing::total_variation(counts / counts.sum(), testing::joint_visible_probs(p)) < 0.02);
  }
}

TEST_CASE("mpf_update") {
  Rng rng(37);
  const RbmParams p = random_params(6, 3, rng);
  const BinaryDataset batch = random_data(5, 6, rng);

  SUBCASE("one-bit-flip delegates to the flow objective") {
    const MpfStep step = mpf_update(p, p, batch, TransitionSpec{}, std::nullopt, 1, rng);
    const FlowValue direct = one_bit_flip_flow(p, batch);
    CHECK(step.flow.objective == direct.objective);
    CHECK(step.flow.gradient.flatten() == direct.gradient.flatten());
    CHECK(step.sample_count == 0);
  }
  SUBCASE("factorized variants at the fixed point give the contrastive form") {
    const RbmParams zero(6, 3);
    for (Method m : {Method::FMPF, Method::PMPF, Method::FPMPF}) {
      TrainConfig c = TrainConfig::defaults_for(m);
      c.n_chains = 5;
      c.batch_size = 5;
      std::optional<ChainPool> pool;
      if (uses_persistent_chains(m)) pool = init_pool(batch, c.n_chains, rng);
      const MpfStep step = mpf_update(zero, zero, batch, transition_spec_for(c), pool, 2, rng);
      CHECK(step.flow.objective == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(step.sample_count == (m == Method::FPMPF ? 10 : 5));
    }
  }
  SUBCASE("persistent variants require a pool") {
    TrainConfig c = TrainConfig::defaults_for(Method::PMPF);
    CHECK_THROWS_AS(mpf_update(p, p, batch, transition_spec_for(c), std::nullopt, 1, rng), ConfigError);
  }
}

TEST_CASE("fit") {
  Rng rng(38);
  const RbmParams p0 = random_params(6, 3, rng, 0.01);

  SUBCASE("zero epochs return the initial parameters") {
    TrainConfig c;
    c.epochs = 0;
    c.batch_size = 4;
    const FitResult r = fit(p0, random_data(4, 6, rng), c);
    CHECK(r.params == p0);
    CHECK(r.trace.epochs.empty());
  }
  SUBCASE("MPF-1flip raises the likelihood of small datasets") {
    // Averaged over five random 4-example datasets.
    double gain = 0.0;
    for (int set = 0; set < 5; ++set) {
      const BinaryDataset data = random_data(4, 6, rng);
      const RbmParams start = random_params(6, 3, rng, 0.01);
      TrainConfig c = TrainConfig::defaults_for(Method::MPF1Flip);
      c.epochs = 200;
      c.learning_rate = 0.1;
      c.batch_size = 4;
      gain += (exact_avg_log_likelihood(fit(start, data, c).params, data) - exact_avg_log_likelihood(start, data)) / 5;
    }
    CHECK(gain >= 1.0);
  }
  SUBCASE("every method runs and traces consecutive epochs") {
    const BinaryDataset data = random_data(30, 6, rng);
    for (Method m : {Method::CD, Method::PCD, Method::MPF1Flip, Method::FMPF, Method::PMPF, Method::FPMPF,
                     Method::ExactML}) {
      TrainConfig c = TrainConfig::defaults_for(m);
      c.epochs = 4;
      c.batch_size = 7;
      c.n_chains = 7;
      c.learning_rate = 0.05;
      c.eval_every = 2;
      int calls = 0;
      const FitResult r = fit(p0, data, c, [&](int, const RbmParams& q) -> std::optional<double> {
        ++calls;
        return exact_avg_log_likelihood(q, data);
      });
      REQUIRE(r.trace.epochs.size() == 4);
      for (std::size_t e = 0; e < 4; ++e) {
        CHECK(r.trace.epochs[e].epoch == static_cast<int>(e) + 1);
        CHECK(std::isfinite(r.trace.epochs[e].objective));
        CHECK(r.trace.epochs[e].seconds == 0.0);
        CHECK(r.trace.epochs[e].loglik.has_value() == (e % 2 == 1));
      }
      CHECK(calls == 2);
    }
  }
  SUBCASE("same seed gives identical runs") {
    const BinaryDataset data = random_data(20, 6, rng);
    for (Method m : {Method::CD, Method::FPMPF}) {
      TrainConfig c = TrainConfig::defaults_for(m);
      c.epochs = 3;
      c.batch_size = 5;
      c.n_chains = 5;
      c.seed = 99;
      const FitResult a = fit(p0, data, c);
      const FitResult b = fit(p0, data, c);
      CHECK(a.params == b.params);
      CHECK(a.trace == b.trace);
    }
  }
  SUBCASE("divergence is reported") {
    const BinaryDataset data = random_data(8, 6, rng);
    TrainConfig c = TrainConfig::defaults_for(Method::MPF1Flip);
    c.epochs = 50;
    c.batch_size = 8;
    c.learning_rate = 1e300;
    CHECK_THROWS_AS(fit(p0, data, c), TrainingDiverged);
  }
}

}  // TEST_SUITE
