#include "core/error.hpp"
#include "core/estimator.hpp"
#include "core/sampler.hpp"
#include "test_helpers.hpp"

#include <memory>

using namespace mlmcmc;

namespace {

// Independent Gaussian likelihood per coordinate: y_i observed with noise s.
FunctionEvaluator gaussian_evaluator(std::vector<double> y, double s) {
  const int dim = static_cast<int>(y.size());
  return FunctionEvaluator(dim, [y = std::move(y), s](std::span<const double> c) {
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ll -= (c[i] - y[i]) * (c[i] - y[i]) / (2.0 * s * s);
    return Evaluation{ll, c[0]};
  });
}

SamplerSettings settings(std::vector<int> dims, std::vector<int> taus, double beta, std::int64_t n) {
  SamplerSettings s;
  for (std::size_t l = 0; l < dims.size(); ++l) s.levels.push_back({dims[l], taus[l], beta, -1, 1});
  s.coarse_chain_length = n;
  return s;
}

}  // namespace

TEST_CASE("pCN proposal preserves the standard normal prior") {
  Rng rng(7);
  const double beta = 0.3;
  std::vector<double> x(1, 0.0);
  double m1 = 0.0, m2 = 0.0, lag = 0.0;
  const int n = 400000;
  for (int i = 0; i < 1000; ++i) x = pcn_propose(x, beta, rng);
  double prev = x[0];
  for (int i = 0; i < n; ++i) {
    x = pcn_propose(x, beta, rng);
    m1 += x[0];
    m2 += x[0] * x[0];
    lag += x[0] * prev;
    prev = x[0];
  }
  m1 /= n;
  m2 /= n;
  lag /= n;
  const double rho = std::sqrt(1.0 - beta * beta);
  const double iat = (1.0 + rho) / (1.0 - rho);
  CHECK(std::abs(m1) < 4.0 * std::sqrt(iat / n));
  CHECK(std::abs(m2 - 1.0) < 6.0 * std::sqrt(2.0 * iat / n));
  CHECK(std::abs(lag - rho) < 0.02);
}

TEST_CASE("pCN proposal formula") {
  Rng a(3), b(3);
  const std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> p = pcn_propose(x, 0.4, a);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(p[i] == x[i] * std::sqrt(1.0 - 0.16) + 0.4 * b.normal());
}

TEST_CASE("multilevel acceptance ratio") {
  CHECK(ml_log_acceptance(-1.0, -2.0, -3.0, -4.0) == doctest::Approx(-1.0 - 2.0 + 3.0 + 4.0));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(ml_log_acceptance(-inf, -1.0, -1.0, -1.0) == -inf);
  CHECK(ml_log_acceptance(-1.0, -1.0, -inf, -1.0) == inf);
}

TEST_CASE("failing evaluations are rejected rather than propagated") {
  FunctionEvaluator ev(1, [](std::span<const double> c) -> Evaluation {
    if (c[0] > 0.5) fail(ErrorCode::Solver, "synthetic failure");
    return {0.0, c[0]};
  });
  const ChainSet chains = run_hierarchy({&ev}, settings({1}, {1}, 0.9, 5000), 1);
  CHECK(chains.levels[0].failures > 0);
  for (double q : chains.levels[0].qoi) CHECK(q <= 0.5);
}

TEST_CASE("expected step counts and burn-in follow the subsampling cascade") {
  SamplerSettings s = settings({2, 4, 6}, {1, 3, 4}, 0.2, 1000);
  s.burn_in_fraction = 0.1;
  CHECK(s.expected_steps() == std::vector<std::int64_t>{1000, 333, 83});
  CHECK(s.burn_in() == std::vector<std::int64_t>{100, 33, 8});
  s.levels[1].burn_in = 0;
  CHECK(s.burn_in()[1] == 0);
  FunctionEvaluator e2(2, [](auto) { return Evaluation{}; }), e4(4, [](auto) { return Evaluation{}; }),
      e6(6, [](auto) { return Evaluation{}; });
  const ChainSet chains = run_hierarchy({&e2, &e4, &e6}, s, 4);
  for (int l = 0; l < 3; ++l) {
    CHECK(chains.levels[l].steps == s.expected_steps()[l]);
    CHECK(static_cast<std::int64_t>(chains.levels[l].qoi.size()) == s.expected_steps()[l]);
  }
  s.levels[1].dimension = 1;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("single-level chain samples the Gaussian posterior") {
  // Prior N(0,1), y = 1, s = 1: posterior N(0.5, 0.5).
  FunctionEvaluator ev = gaussian_evaluator({1.0}, 1.0);
  const ChainSet chains = run_hierarchy({&ev}, settings({1}, {1}, 0.6, 400000), 21);
  const std::vector<double> q = qoi_series(chains, 0);
  const double se = std::sqrt(sample_variance(q) * integrated_autocorrelation_time(q) / q.size());
  CHECK(std::abs(sample_mean(q) - 0.5) < 4.0 * se);
  CHECK(std::abs(sample_variance(q) - 0.5) < 0.02);
}

TEST_CASE("finer level of a two-level chain samples its own posterior") {
  // Level 0 sees coordinate 0 only; level 1 sees both (y = (1, -1), s = 0.7).
  FunctionEvaluator coarse = gaussian_evaluator({1.0}, 0.7);
  auto fine_fn = [](std::span<const double> c) {
    const double ll = -((c[0] - 1.0) * (c[0] - 1.0) + (c[1] + 1.0) * (c[1] + 1.0)) / (2.0 * 0.49);
    return Evaluation{ll, c[1]};
  };
  FunctionEvaluator fine(2, fine_fn);
  SamplerSettings s = settings({1, 2}, {1, 5}, 0.5, 1000000);
  s.levels[1].store_stride = 10;
  const ChainSet chains = run_hierarchy({&coarse, &fine}, s, 8);
  const double post_mean = -1.0 / (1.0 + 0.49), post_var = 0.49 / 1.49;
  const std::vector<double> q = qoi_series(chains, 1);
  const double se = std::sqrt(sample_variance(q) * integrated_autocorrelation_time(q) / q.size());
  CHECK(std::abs(sample_mean(q) - post_mean) < 4.0 * se);
  CHECK(std::abs(sample_variance(q) - post_var) < 0.03);
  // The coarse modes of the fine chain follow the coarse posterior N(1/1.49, 0.49/1.49).
  double m = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < chains.levels[1].stored_count(); ++k) {
    if (chains.levels[1].stored_step(k) <= chains.burn_in[1]) continue;
    m += chains.levels[1].sample(k)[0];
    ++n;
  }
  CHECK(std::abs(m / n - 1.0 / 1.49) < 0.03);
}

TEST_CASE("snapshot and restore reproduce an uninterrupted run bit for bit") {
  FunctionEvaluator c0 = gaussian_evaluator({0.3}, 0.5), c1 = gaussian_evaluator({0.3, 0.1}, 0.5),
                    c2 = gaussian_evaluator({0.3, 0.1, -0.2}, 0.5);
  const SamplerSettings s = settings({1, 2, 3}, {1, 3, 2}, 0.3, 3000);
  HierarchySampler full({&c0, &c1, &c2}, s, 99, 2);
  full.advance();
  HierarchySampler first({&c0, &c1, &c2}, s, 99, 2);
  CHECK_FALSE(first.advance(1234));
  CHECK(first.coarse_iterations() == 1234);
  const SamplerSnapshot snap = first.snapshot();
  HierarchySampler second({&c0, &c1, &c2}, s, 99, 2);
  second.restore(snap);
  CHECK(second.advance());
  CHECK(bitwise_equal(second.chains(), full.chains()));
  for (int l = 0; l < 3; ++l) CHECK(bitwise_equal(second.states()[l], full.states()[l]));
  // Different replicate streams differ.
  HierarchySampler other({&c0, &c1, &c2}, s, 99, 3);
  other.advance();
  CHECK_FALSE(bitwise_equal(other.chains(), full.chains()));
}
