#include "core/error.hpp"
#include "core/transform.hpp"
#include "oracle_values.hpp"
#include "test_helpers.hpp"

#include <random>

using namespace mlmcmc;

TEST_CASE("gamma transform matches high-precision values") {
  const GammaTransformParams p{0.4, 2.5, 0.1};
  for (const auto& c : oracle::kTransformCases) {
    INFO("g = " << c.x);
    CHECK_REL(gamma_transform(c.x, p), c.value, 1e-12);
  }
}

TEST_CASE("gamma transform limits and monotonicity") {
  const GammaTransformParams p{0.4, 2.5, 0.1};
  CHECK(gamma_transform(-std::numeric_limits<double>::infinity(), p) == 0.0);
  CHECK(gamma_transform(std::numeric_limits<double>::infinity(), p) == std::numeric_limits<double>::infinity());
  double previous = 0.0;
  for (double g = -40.0; g <= 40.0; g += 0.01) {
    const double a = gamma_transform(g, p);
    CHECK(a > previous);
    CHECK(std::isfinite(a));
    previous = a;
  }
}

TEST_CASE("gamma transform lower bound (phi/2) min(1, exp(-|g|))") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 4.0);
  for (const GammaTransformParams& p : {GammaTransformParams{0.4, 2.5, 0.1}, GammaTransformParams{1.0, 0.5, 0.5}}) {
    for (int i = 0; i < 20000; ++i) {
      const double g = normal(rng);
      CHECK(gamma_transform(g, p) >= 0.5 * p.floor_weight * std::min(1.0, std::exp(-std::abs(g))));
    }
  }
}

TEST_CASE("logistic function is stable for large arguments") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(-800.0) == 0.0);
  CHECK_REL(logistic(-40.0), std::exp(-40.0) / (1.0 + std::exp(-40.0)), 1e-15);
  for (double g : {-3.0, -0.1, 2.0, 17.0}) CHECK_REL(logistic(g) + logistic(-g), 1.0, 1e-15);
}

TEST_CASE("vector transform agrees with the scalar transform and allows aliasing") {
  const GammaTransformParams p{0.4, 2.5, 0.1};
  std::vector<double> g{-5.0, -1.0, 0.0, 0.3, 4.0};
  const std::vector<double> a = transform_field(g, p);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(a[i] == gamma_transform(g[i], p));
  transform_field_into(g, p, g);
  CHECK(g == a);
}

TEST_CASE("transform parameters are validated") {
  CHECK_THROWS_AS((GammaTransformParams{0.0, 2.5, 0.1}.validate()), Error);
  CHECK_THROWS_AS((GammaTransformParams{0.4, -1.0, 0.1}.validate()), Error);
  CHECK_THROWS_AS((GammaTransformParams{0.4, 2.5, -0.1}.validate()), Error);
  CHECK_THROWS_AS(gamma_transform(std::numeric_limits<double>::quiet_NaN(), {}), Error);
}
