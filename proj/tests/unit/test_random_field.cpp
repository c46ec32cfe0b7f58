#include "core/error.hpp"
#include "core/random_field.hpp"
#include "oracle_values.hpp"
#include "test_helpers.hpp"

#include <filesystem>
#include <numeric>
#include <random>

using namespace mlmcmc;

TEST_CASE("Matérn covariance matches high-precision Bessel evaluations") {
  for (const auto& c : oracle::kMaternCases) {
    INFO("nu = " << c.nu << ", r = " << c.r);
    CHECK_REL(matern_cov_distance(c.r, {c.variance, c.ell, c.nu}), c.value, 1e-12);
  }
  CHECK(matern_cov_distance(0.0, {4.0, 0.5, 3.0}) == 4.0);
}

TEST_CASE("Matérn covariance is symmetric, maximal at zero and decreasing") {
  const MaternParams p{2.0, 0.3, 3.0};
  double previous = matern_cov_distance(0.0, p);
  for (double r = 0.01; r < 3.0; r += 0.05) {
    const double c = matern_cov_distance(r, p);
    CHECK(c < previous);
    CHECK(c > 0.0);
    previous = c;
  }
  CHECK(matern_cov({0.1, 0.2}, {0.7, 0.4}, p) == matern_cov({0.7, 0.4}, {0.1, 0.2}, p));
}

TEST_CASE("Matérn parameters are validated") {
  CHECK_THROWS_AS((MaternParams{-1.0, 0.5, 1.5}.validate()), Error);
  CHECK_THROWS_AS((MaternParams{4.0, 0.5, 0.0}.validate()), Error);
  CHECK_THROWS_AS(build_kl_basis({4.0, 0.0, 1.5}, 4, 2), Error);
  CHECK_THROWS_AS(build_kl_basis({4.0, 0.5, 1.5}, 4, 17), Error);
}

TEST_CASE("Gauss-Legendre rule on [0, 1]") {
  std::vector<double> x, w;
  gauss_legendre_unit(5, x, w);
  for (int i = 0; i < 5; ++i) {
    // Node order is irrelevant; compare as sets.
    bool found = false;
    for (int j = 0; j < 5; ++j) {
      if (std::abs(x[i] - oracle::kGaussLegendre5Nodes[j]) < 1e-15) {
        found = true;
        CHECK(std::abs(w[i] - oracle::kGaussLegendre5Weights[j]) < 1e-15);
      }
    }
    CHECK(found);
  }
  // Exact for polynomials of degree 2n - 1.
  for (int n : {1, 3, 8, 20}) {
    gauss_legendre_unit(n, x, w);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += w[i] * std::pow(x[i], k);
      CHECK(std::abs(s - 1.0 / (k + 1)) < 1e-14);
    }
  }
}

TEST_CASE("Nyström eigenvalues agree with an independent dense eigen-solve") {
  for (const auto& [nu, reference] : {std::pair{1.5, oracle::kNystromNu15}, std::pair{3.0, oracle::kNystromNu3}}) {
    const KLBasis b = build_kl_basis({4.0, 0.5, nu}, 6, 10);
    for (int m = 0; m < 10; ++m) {
      INFO("nu = " << nu << ", m = " << m);
      CHECK_REL(b.eigenvalues[m], reference[m], 1e-11);
    }
  }
}

TEST_CASE("KL basis: descending eigenvalues, orthonormal eigenfunctions, full trace") {
  const int nq = 8;
  const KLBasis b = build_kl_basis({4.0, 0.5, 1.5}, nq, nq * nq);
  for (std::size_t m = 1; m < b.eigenvalues.size(); ++m) CHECK(b.eigenvalues[m] <= b.eigenvalues[m - 1]);
  // Σ_m λ_m = Σ_i w_i C(x_i, x_i) = σ² for the complete discrete spectrum.
  CHECK(std::abs(std::accumulate(b.eigenvalues.begin(), b.eigenvalues.end(), 0.0) - 4.0) < 1e-10);
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(b.quad_weights.data(), nq * nq);
  const Eigen::MatrixXd gram = b.eigenfunctions.transpose() * w.asDiagonal() * b.eigenfunctions;
  CHECK((gram - Eigen::MatrixXd::Identity(nq * nq, nq * nq)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Nyström extension reproduces the node values") {
  const KLBasis b = build_kl_basis({4.0, 0.5, 3.0}, 10, 12);
  const Eigen::MatrixXd at_nodes = b.eigenfunctions_at(b.quad_nodes);
  CHECK((at_nodes - b.eigenfunctions).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::MatrixXd scaled = b.scaled_modes_at(b.quad_nodes, 5);
  CHECK(scaled.cols() == 5);
  for (int m = 0; m < 5; ++m) {
    CHECK((scaled.col(m) - std::sqrt(b.eigenvalues[m]) * b.eigenfunctions.col(m)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("Pointwise KL variance never exceeds the field variance") {
  const KLBasis b = build_kl_basis({4.0, 0.5, 1.5}, 12, 60);
  std::vector<Point2> pts;
  for (double x = 0.05; x < 1.0; x += 0.15)
    for (double y = 0.05; y < 1.0; y += 0.15) pts.push_back({x, y});
  const Eigen::MatrixXd phi = b.scaled_modes_at(pts);
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    const double v = phi.row(i).squaredNorm();
    CHECK(v <= 4.0 + 1e-9);
    CHECK(v > 3.0);  // 60 modes capture most of the variance for λ = 0.5
  }
}

TEST_CASE("Field evaluation is linear in the coefficients") {
  const KLBasis b = build_kl_basis({4.0, 0.5, 1.5}, 8, 6);
  const std::vector<Point2> pts{{0.1, 0.1}, {0.5, 0.3}, {0.9, 0.8}};
  std::vector<double> c1{1, 0, 0, 0, 0, 0}, c2{0.3, -0.2, 0.5, 0.1, 0.0, 2.0}, c3(6);
  for (int i = 0; i < 6; ++i) c3[i] = 2.0 * c1[i] - 3.0 * c2[i];
  const auto f1 = eval_field({c1, &b}, pts), f2 = eval_field({c2, &b}, pts), f3 = eval_field({c3, &b}, pts);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(f3[i] - (2.0 * f1[i] - 3.0 * f2[i])) < 1e-12);
}

TEST_CASE("KL basis cache round-trips bit for bit") {
  const auto dir = std::filesystem::temp_directory_path() / "mlmcmc_test_kl_cache";
  std::filesystem::remove_all(dir);
  const MaternParams p{4.0, 0.5, 3.0};
  const KLBasis built = cached_kl_basis(p, 7, 9, dir);
  CHECK(std::filesystem::exists(dir / kl_cache_key(p, 7, 9)));
  const KLBasis loaded = cached_kl_basis(p, 7, 9, dir);
  CHECK(loaded.eigenvalues == built.eigenvalues);
  CHECK(loaded.eigenfunctions == built.eigenfunctions);
  CHECK(loaded.quad_weights == built.quad_weights);
  CHECK(kl_cache_key(p, 7, 9) != kl_cache_key({4.0, 0.5, 1.5}, 7, 9));
  std::filesystem::remove_all(dir);
}
