#include "support.hpp"

#include "flowrbm/error.hpp"
#include "flowrbm/flow.hpp"
#include "flowrbm/io.hpp"

using namespace flowrbm;
using testing::random_data;
using testing::random_params;

namespace {

const OddFunction kOdds[] = {OddFunction::zero(), OddFunction::identity(), OddFunction::tanh()};

BinaryDataset parity_data(int dim, int n, std::uint64_t seed) {
  return io::generate_synthetic({io::Parity{dim}, n, seed});
}

double naive_one_flip(const RbmParams& p, const BinaryDataset& data) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    const Eigen::VectorXd d = data.rows.row(r).transpose();
    for (int i = 0; i < p.visible(); ++i) {
      Eigen::VectorXd flipped = d;
      flipped[i] = 1.0 - flipped[i];
      total += std::exp(0.5 * (free_energy(p, d) - free_energy(p, flipped)));
    }
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

TEST_SUITE("flow") {

TEST_CASE("odd functions") {
  CHECK(OddFunction::parse("tanh").kind() == OddFunction::Kind::Tanh);
  CHECK(OddFunction::parse("identity")(3.0) == 3.0);
  CHECK(OddFunction::parse("zero")(3.0) == 0.0);
  CHECK_THROWS_AS(OddFunction::parse("cosh"), ConfigError);
  CHECK(OddFunction::custom([](double x) { return x * x * x; })(2.0) == 8.0);
  CHECK_THROWS_AS(OddFunction::custom([](double x) { return x * x; }), ContractViolation);
  CHECK_THROWS_AS(OddFunction::custom([](double x) { return x + 1e-3; }), ContractViolation);
}

TEST_CASE("rates") {
  RbmParams zero(4, 2);
  for (const auto& odd : kOdds) {
    CHECK(gamma(zero, Eigen::Vector4d(1, 0, 0, 1), Eigen::Vector4d(0, 1, 1, 0), 1.0, odd) == 1.0);
  }
  CHECK(gamma_from_free_energies(2.0, 0.0, 1.0, OddFunction::zero()) == doctest::Approx(std::exp(1.0)));
  CHECK(gamma_from_free_energies(2.0, 0.0, 0.0, OddFunction::zero()) == 0.0);

  int overflows = 0;
  const double huge = gamma_from_free_energies(5000.0, 0.0, 1.0, OddFunction::zero(), &overflows);
  CHECK(std::isfinite(huge));
  CHECK(overflows == 1);
}

TEST_CASE("rates satisfy detailed balance for every odd function") {
  Rng rng(20);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 2 + trial % 6;
    const RbmParams p = random_params(d, 1 + trial % 4, rng);
    const Eigen::VectorXd a = random_data(1, d, rng).rows.row(0).transpose();
    const Eigen::VectorXd b = random_data(1, d, rng).rows.row(0).transpose();
    const OddFunction& odd = kOdds[trial % 3];
    const double into_a = gamma(p, b, a, 1.0, odd) * std::exp(-free_energy(p, b));
    const double into_b = gamma(p, a, b, 1.0, odd) * std::exp(-free_energy(p, a));
    CHECK(std::abs(into_a - into_b) / into_b < 1e-10);
  }
}

TEST_CASE("one-bit-flip flow") {
  SUBCASE("uniform model") {
    RbmParams zero(5, 3);
    BinaryDataset sym{Eigen::MatrixXd(2, 5), "sym"};
    sym.rows.row(0).setZero();
    sym.rows.row(1).setOnes();
    const FlowValue fv = one_bit_flip_flow(zero, sym);
    CHECK(fv.objective == doctest::Approx(5.0));
    CHECK(fv.gradient.dW.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(fv.gradient.db.cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("matches rebuilding each flipped state") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const RbmParams p = random_params(trial < 5 ? 2 : 6, trial < 5 ? 1 : 4, rng);
      const BinaryDataset data = random_data(trial < 5 ? 1 : 5, p.visible(), rng);
      CHECK(one_bit_flip_flow(p, data).objective == doctest::Approx(naive_one_flip(p, data)).epsilon(1e-12));
    }
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(22);
    for (int trial = 0; trial < 10; ++trial) {
      const RbmParams p = random_params(5, 3, rng, 0.5, trial % 2 ? 1.0 : 1.7);
      const BinaryDataset data = random_data(4, 5, rng);
      const Eigen::VectorXd fd =
          testing::finite_difference(p, [&](const RbmParams& q) { return one_bit_flip_flow(q, data).objective; });
      CHECK(testing::rel_error(one_bit_flip_flow(p, data).gradient.flatten(), fd) < 1e-5);
    }
  }
}

TEST_CASE("factorized flow") {
  Rng rng(23);
  SUBCASE("fixed point is the contrastive update") {
    for (int trial = 0; trial < 5; ++trial) {
      const RbmParams p = random_params(6, 3, rng);
      const BinaryDataset data = random_data(5, 6, rng);
      const BinaryDataset samples = random_data(7, 6, rng);
      const FlowValue fv = factorized_flow(p, p, data, samples);
      CHECK(fv.objective == doctest::Approx(1.0).epsilon(1e-15));
      ParamGradient contrastive = ParamGradient::zeros_like(p);
      for (Eigen::Index r = 0; r < data.size(); ++r) contrastive += free_energy_grad(p, data.rows.row(r).transpose()) * (0.5 / 5);
      for (Eigen::Index r = 0; r < samples.size(); ++r) contrastive -= free_energy_grad(p, samples.rows.row(r).transpose()) * (0.5 / 7);
      CHECK(testing::rel_error(fv.gradient.flatten(), contrastive.flatten()) < 1e-12);
    }
  }
  SUBCASE("gradient matches finite differences away from the fixed point") {
    for (int trial = 0; trial < 10; ++trial) {
      const RbmParams prev = random_params(5, 3, rng, 0.5);
      RbmParams p = prev;
      p.assign_flat(prev.flatten() + 0.3 * random_params(5, 3, rng).flatten());
      const BinaryDataset data = random_data(4, 5, rng);
      const BinaryDataset samples = random_data(6, 5, rng);
      const Eigen::VectorXd fd = testing::finite_difference(
          p, [&](const RbmParams& q) { return factorized_flow(q, prev, data, samples).objective; });
      CHECK(testing::rel_error(factorized_flow(p, prev, data, samples).gradient.flatten(), fd) < 1e-5);
    }
  }
}

TEST_CASE("enumerated flow") {
  SUBCASE("no connectivity means no flow") {
    Rng rng(24);
    const RbmParams p = random_params(4, 2, rng);
    const Eigen::VectorXd pd = empirical_distribution(random_data(3, 4, rng));
    CHECK(enumerate_full_flow(p, pd, Eigen::MatrixXd::Zero(16, 16), OddFunction::zero()) == 0.0);
  }
  SUBCASE("uniform model with full connectivity from a single state") {
    for (int d : {2, 4, 6}) {
      BinaryDataset one{Eigen::MatrixXd::Zero(1, d), "one"};
      const double flow = enumerate_full_flow(RbmParams(d, 2), empirical_distribution(one), full_connectivity(d),
                                              OddFunction::zero());
      CHECK(flow == doctest::Approx(std::ldexp(1.0, d) - 1.0));
    }
  }
  SUBCASE("sparse one-bit-flip objective equals the enumerated flow") {
    Rng rng(25);
    for (int trial = 0; trial < 20; ++trial) {
      const int d = 4 + trial % 5;
      const RbmParams p = random_params(d, 1 + trial % 5, rng);
      const BinaryDataset data = parity_data(d, 6, 100 + trial);
      const double sparse = one_bit_flip_flow(p, data).objective;
      const double dense =
          enumerate_full_flow(p, empirical_distribution(data), one_bit_flip_connectivity(d), OddFunction::zero());
      CHECK(std::abs(sparse - dense) / dense < 1e-10);
    }
  }
  SUBCASE("malformed connectivity is rejected") {
    const Eigen::VectorXd pd = Eigen::VectorXd::Constant(4, 0.25);
    Eigen::MatrixXd g = one_bit_flip_connectivity(2);
    g(0, 1) = 0.5;
    CHECK_THROWS_AS(enumerate_full_flow(RbmParams(2, 1), pd, g, OddFunction::zero()), ContractViolation);
    CHECK_THROWS_AS(enumerate_full_flow(RbmParams(2, 1), pd, Eigen::MatrixXd::Identity(4, 4), OddFunction::zero()),
                    ContractViolation);
  }
}

TEST_CASE("connectivity and empirical distribution helpers") {
  const Eigen::MatrixXd g = one_bit_flip_connectivity(3);
  CHECK(g.rowwise().sum().isApproxToConstant(3.0));
  CHECK(g(0, 1) == 1.0);
  CHECK(g(0, 3) == 0.0);
  CHECK(full_connectivity(3).sum() == 56.0);

  BinaryDataset data{Eigen::MatrixXd(4, 2), "d"};
  data.rows << 0, 0, 1, 0, 1, 0, 1, 1;
  const Eigen::VectorXd pd = empirical_distribution(data);
  CHECK(pd.isApprox(Eigen::Vector4d(0.25, 0.5, 0.0, 0.25)));
}

TEST_CASE("transition spec validation") {
  TransitionSpec spec;
  spec.connectivity = Factorized{0, false, false};
  CHECK_THROWS_AS(spec.validate(4), ConfigError);
  spec.connectivity = Factorized{3, false, true};
  CHECK_THROWS_AS(spec.validate(4), ConfigError);
  spec.connectivity = FullEnumeration{};
  CHECK_THROWS_AS(spec.validate(kMaxFullEnumerationVisible + 1), CapacityError);
  CHECK_NOTHROW(spec.validate(4));
}

}  // TEST_SUITE
