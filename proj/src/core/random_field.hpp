#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mlmcmc {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Matérn covariance parameters on the unit square (d = 2).
struct MaternParams {
  double variance = 4.0;
  double corr_length = 0.5;
  double smoothness = 1.5;

  void validate() const;

  /// Sobolev index k = 2ν + d.
  double sobolev_index() const { return 2.0 * smoothness + 2.0; }

  friend bool operator==(const MaternParams&, const MaternParams&) = default;
};

/// Covariance as a function of distance r = |x - y|. Returns the variance at r = 0.
double matern_cov_distance(double r, const MaternParams& p);

double matern_cov(Point2 x, Point2 y, const MaternParams& p);

/// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre_unit(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Truncated Karhunen-Loève basis of the Matérn operator on [0,1]^2, discretised
/// by Nyström quadrature on a tensor Gauss-Legendre grid.
///
/// Eigenfunctions are stored at the quadrature nodes (one column per mode) and
/// normalised in the discrete L2 inner product defined by `quad_weights`.
/// Off-node values come from the Nyström extension
///   b_m(x) = (1 / λ_m) Σ_j w_j C(x, x_j) b_m(x_j).
struct KLBasis {
  MaternParams params;
  int n_quad = 0;
  int truncation = 0;
  double mean = 0.0;
  std::vector<double> eigenvalues;  // descending
  Eigen::MatrixXd eigenfunctions;   // quad nodes x truncation
  std::vector<Point2> quad_nodes;
  std::vector<double> quad_weights;

  /// Eigenfunction values at arbitrary points, one row per point and one column
  /// per mode (first `modes` modes; all modes when modes < 0).
  Eigen::MatrixXd eigenfunctions_at(std::span<const Point2> points, int modes = -1) const;

  /// Same as eigenfunctions_at but each column scaled by sqrt(λ_m), so that the
  /// field is mean + Φ ξ.
  Eigen::MatrixXd scaled_modes_at(std::span<const Point2> points, int modes = -1) const;
};

KLBasis build_kl_basis(const MaternParams& p, int n_quad, int truncation);

/// Realisation of the Gaussian field through its KL coefficients.
struct GaussianFieldRealisation {
  std::vector<double> coefficients;
  const KLBasis* basis = nullptr;
};

/// mean + Σ_m sqrt(λ_m) ξ_m b_m(x) at each point. Uses the first
/// coefficients.size() modes of the basis.
std::vector<double> eval_field(const GaussianFieldRealisation& r, std::span<const Point2> points);

/// Cache key built from the parameters that determine the basis.
std::string kl_cache_key(const MaternParams& p, int n_quad, int truncation);

void save_kl_basis(const KLBasis& basis, const std::filesystem::path& path);
KLBasis load_kl_basis(const std::filesystem::path& path);

/// Loads a cached basis from `cache_dir` when one exists for these parameters,
/// otherwise builds and stores it. An empty cache_dir disables caching.
KLBasis cached_kl_basis(const MaternParams& p, int n_quad, int truncation, const std::filesystem::path& cache_dir);

}  // namespace mlmcmc
