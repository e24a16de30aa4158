#include "support.hpp"

#include "flowrbm/error.hpp"
#include "flowrbm/eval.hpp"
#include "flowrbm/io.hpp"
#include "flowrbm/oracle.hpp"

using namespace flowrbm;
using testing::random_data;
using testing::random_params;

namespace {

TransitionSpec spec_with(const OddFunction& odd, bool full = false) {
  TransitionSpec spec;
  spec.odd = odd;
  if (full) spec.connectivity = FullEnumeration{};
  return spec;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("uniform chain on the square") {
  const ExplicitChain chain = build_chain(RbmParams(2, 3), TransitionSpec{});
  Eigen::Matrix4d expected;
  expected << -2, 1, 1, 0,  //
      1, -2, 0, 1,          //
      1, 0, -2, 1,          //
      0, 1, 1, -2;
  CHECK(chain.gamma.isApprox(expected));
  CHECK(is_irreducible(chain));
}

TEST_CASE("columns sum to zero") {
  Rng rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    const RbmParams p = random_params(1 + trial % 6, 1 + trial % 4, rng);
    const ExplicitChain chain = build_chain(p, spec_with(OddFunction::tanh(), trial % 2 == 0));
    const double scale = chain.gamma.cwiseAbs().maxCoeff();
    CHECK(chain.gamma.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

TEST_CASE("rates match a direct evaluation entry by entry") {
  Rng rng(51);
  const RbmParams p = random_params(3, 2, rng);
  const ExplicitChain chain = build_chain(p, spec_with(OddFunction::identity()));
  const Eigen::MatrixXd states = all_states(3);
  for (Eigen::Index j = 0; j < 8; ++j) {
    for (Eigen::Index i = 0; i < 8; ++i) {
      if (i == j) continue;
      const bool neighbours = std::popcount(static_cast<unsigned>(i ^ j)) == 1;
      const double fj = free_energy(p, states.row(j).transpose());
      const double fi = free_energy(p, states.row(i).transpose());
      const double direct = neighbours ? std::exp(0.5 * ((fi - fj) + 1.0) * (fj - fi)) : 0.0;
      CHECK(chain.gamma(i, j) == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("factorized connectivity and oversize chains are refused") {
  TransitionSpec spec;
  spec.connectivity = Factorized{};
  CHECK_THROWS_AS(build_chain(RbmParams(3, 2), spec), ConfigError);
  CHECK_THROWS_AS(build_chain(RbmParams(kMaxOracleVisible + 1, 1), TransitionSpec{}), CapacityError);
}

TEST_CASE("detailed balance") {
  Rng rng(52);
  SUBCASE("holds for random models and every odd function") {
    for (int trial = 0; trial < 60; ++trial) {
      const RbmParams p = random_params(2 + trial % 7, 1 + trial % 6, rng);
      const OddFunction odd = trial % 3 == 0 ? OddFunction::zero() : trial % 3 == 1 ? OddFunction::identity()
                                                                                     : OddFunction::tanh();
      CHECK(check_detailed_balance(build_chain(p, spec_with(odd, trial % 4 == 0)), p) < 1e-10);
    }
  }
  SUBCASE("holds for a custom odd function") {
    const RbmParams p = random_params(5, 3, rng);
    const OddFunction cubic = OddFunction::custom([](double x) { return 0.1 * x * x * x; });
    CHECK(check_detailed_balance(build_chain(p, spec_with(cubic)), p) < 1e-10);
  }
  SUBCASE("uniform model is balanced exactly") {
    CHECK(check_detailed_balance(build_chain(RbmParams(4, 2), TransitionSpec{}), RbmParams(4, 2)) < 1e-15);
  }
  SUBCASE("a corrupted rate is detected") {
    const RbmParams p = random_params(4, 3, rng);
    ExplicitChain chain = build_chain(p, TransitionSpec{});
    chain.gamma(1, 0) *= 1.01;
    CHECK(check_detailed_balance(chain, p) > 1e-3);
  }
}

TEST_CASE("stationarity") {
  Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const RbmParams p = random_params(2 + trial % 6, 1 + trial % 5, rng);
    CHECK(stationarity_residual(build_chain(p, TransitionSpec{}), p) < 1e-10);
  }
  CHECK(stationarity_residual(build_chain(RbmParams(5, 2), TransitionSpec{}), RbmParams(5, 2)) < 1e-14);

  const RbmParams p = random_params(4, 2, rng);
  const ExplicitChain chain = build_chain(p, TransitionSpec{});
  Eigen::VectorXd moved = exact_visible_log_probs(p).array().exp();
  const double mass = 0.5 * moved[3];
  moved[3] -= mass;
  moved[12] += mass;
  CHECK(stationarity_residual(chain, moved) > 1e-4);
}

TEST_CASE("evolve") {
  Rng rng(54);
  const RbmParams p = random_params(4, 3, rng, 0.7);
  const ExplicitChain chain = build_chain(p, TransitionSpec{});
  const Eigen::VectorXd p0 = empirical_distribution(random_data(3, 4, rng));
  CHECK(evolve(chain, p0, 0.0) == p0);

  for (double t : {0.01, 0.3, 2.0, 40.0}) {
    const Eigen::VectorXd pt = evolve(chain, p0, t);
    CHECK(std::abs(pt.sum() - 1.0) < 1e-9);
    CHECK((pt.array() >= 0.0).all());
  }

  const double norm = chain.gamma.cwiseAbs().colwise().sum().maxCoeff();
  const Eigen::VectorXd limit = evolve(chain, p0, 1e3 / norm);
  CHECK(testing::total_variation(limit, exact_visible_log_probs(p).array().exp().matrix()) < 1e-6);

  const Eigen::VectorXd half = evolve(chain, p0, 0.35);
  CHECK(evolve(chain, half, 0.35).isApprox(evolve(chain, p0, 0.7), 1e-10));

  CHECK_THROWS_AS(evolve(chain, p0, -1.0), ContractViolation);
  CHECK_THROWS_AS(evolve(chain, Eigen::VectorXd::Zero(16), 1.0), ContractViolation);
}

TEST_CASE("irreducibility") {
  Rng rng(55);
  const RbmParams p = random_params(4, 2, rng);
  CHECK(is_irreducible(build_chain(p, TransitionSpec{})));
  ExplicitChain cut = build_chain(p, TransitionSpec{});
  for (Eigen::Index i = 1; i < cut.states(); ++i) {
    cut.gamma(i, 0) = 0.0;
  }
  cut.gamma(0, 0) = 0.0;
  CHECK_FALSE(is_irreducible(cut));
}

TEST_CASE("taylor check") {
  Rng rng(56);
  SUBCASE("zero time step") {
    const RbmParams p = random_params(4, 2, rng);
    const TaylorReport r = taylor_check(build_chain(p, TransitionSpec{}), random_data(3, 4, rng), {0.0});
    CHECK(r.rows[0].kl == 0.0);
    CHECK(r.rows[0].prediction == 0.0);
  }
  SUBCASE("KL approaches the first-order prediction") {
    for (int trial = 0; trial < 5; ++trial) {
      const RbmParams p = random_params(5, 3, rng);
      const TaylorReport r = taylor_check(build_chain(p, TransitionSpec{}), random_data(4, 5, rng), {1e-2, 1e-3, 1e-4});
      double last = INFINITY;
      for (const TaylorRow& row : r.rows) {
        const double gap = std::abs(row.kl / row.epsilon - r.flow_rate) / r.flow_rate;
        CHECK(gap < last);
        last = gap;
      }
    }
  }
  SUBCASE("flow rate equals the enumerated flow") {
    const RbmParams p = random_params(6, 3, rng);
    const BinaryDataset data = io::generate_synthetic({io::Parity{6}, 5, 3});
    const TaylorReport r = taylor_check(build_chain(p, TransitionSpec{}), data, {});
    CHECK(r.flow_rate == doctest::Approx(enumerate_full_flow(p, empirical_distribution(data),
                                                             one_bit_flip_connectivity(6), OddFunction::zero()))
                             .epsilon(1e-12));
  }
  SUBCASE("disconnected data never loses mass") {
    ExplicitChain chain = build_chain(random_params(3, 2, rng), TransitionSpec{});
    chain.gamma.col(0).setZero();
    BinaryDataset origin{Eigen::MatrixXd::Zero(1, 3), "origin"};
    const TaylorReport r = taylor_check(chain, origin, {1e-2, 1e-3, 1e-4});
    for (const TaylorRow& row : r.rows) CHECK(row.kl < 1e-15);
  }
}

TEST_CASE("gibbs kernel") {
  Rng rng(57);
  const RbmParams p = random_params(3, 2, rng);
  const Eigen::MatrixXd k = gibbs_visible_kernel(p);
  CHECK(k.colwise().sum().isApproxToConstant(1.0, 1e-12));
  const Eigen::VectorXd pi = testing::joint_visible_probs(p);
  CHECK((k * pi).isApprox(pi, 1e-12));
}

}  // TEST_SUITE
