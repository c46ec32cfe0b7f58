#include "core/random_field.hpp"

#include "core/error.hpp"

#include <lapacke.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace mlmcmc {

void MaternParams::validate() const {
  if (!(variance > 0.0)) fail(ErrorCode::Config, "matern variance must be positive");
  if (!(corr_length > 0.0)) fail(ErrorCode::Config, "matern correlation length must be positive");
  if (!(smoothness >= 1.0)) fail(ErrorCode::Config, "matern smoothness must be at least 1");
}

double matern_cov_distance(double r, const MaternParams& p) {
  const double nu = p.smoothness;
  const double s2 = p.variance;
  if (r <= 0.0) return s2;

  // Half-integer smoothness has closed forms; they are exact, not approximations.
  if (nu == 0.5) return s2 * std::exp(-r / p.corr_length);
  if (nu == 1.5) {
    const double z = std::sqrt(3.0) * r / p.corr_length;
    return s2 * (1.0 + z) * std::exp(-z);
  }
  if (nu == 2.5) {
    const double z = std::sqrt(5.0) * r / p.corr_length;
    return s2 * (1.0 + z + z * z / 3.0) * std::exp(-z);
  }

  const double z = std::sqrt(2.0 * nu) * r / p.corr_length;
  if (z < 1e-10) return s2;
  const double log_prefactor = (1.0 - nu) * std::numbers::ln2 - std::lgamma(nu) + nu * std::log(z);
  const double k = std::cyl_bessel_k(nu, z);
  if (k == 0.0) return 0.0;
  return s2 * std::exp(log_prefactor + std::log(k));
}

double matern_cov(Point2 x, Point2 y, const MaternParams& p) {
  return matern_cov_distance(std::hypot(x.x - y.x, x.y - y.y), p);
}

void gauss_legendre_unit(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  require(n >= 1, "gauss_legendre_unit: n must be positive");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // Map [-1, 1] to [0, 1]; roots come out in descending order of x.
    nodes[i] = 0.5 * (1.0 - x);
    nodes[n - 1 - i] = 0.5 * (1.0 + x);
    weights[i] = 0.5 * w;
    weights[n - 1 - i] = 0.5 * w;
  }
}

KLBasis build_kl_basis(const MaternParams& p, int n_quad, int truncation) {
  p.validate();
  require(n_quad >= 1, "build_kl_basis: n_quad must be positive");
  const int n = n_quad * n_quad;
  require(truncation >= 1 && truncation <= n, "build_kl_basis: truncation must lie in [1, n_quad^2]");

  std::vector<double> gl_x, gl_w;
  gauss_legendre_unit(n_quad, gl_x, gl_w);

  KLBasis basis;
  basis.params = p;
  basis.n_quad = n_quad;
  basis.truncation = truncation;
  basis.quad_nodes.reserve(n);
  basis.quad_weights.reserve(n);
  for (int j = 0; j < n_quad; ++j) {
    for (int i = 0; i < n_quad; ++i) {
      basis.quad_nodes.push_back({gl_x[i], gl_x[j]});
      basis.quad_weights.push_back(gl_w[i] * gl_w[j]);
    }
  }

  std::vector<double> sqrt_w(n);
  for (int i = 0; i < n; ++i) sqrt_w[i] = std::sqrt(basis.quad_weights[i]);

  // Symmetrically scaled Nyström matrix; only the lower triangle is referenced.
  Eigen::MatrixXd a(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      a(i, j) = sqrt_w[i] * matern_cov(basis.quad_nodes[i], basis.quad_nodes[j], p) * sqrt_w[j];
    }
  }

  std::vector<double> w(n);
  Eigen::MatrixXd z(n, truncation);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(truncation));
  lapack_int found = 0;
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, n - truncation + 1, n, 0.0, &found,
                     w.data(), z.data(), n, isuppz.data());
  if (info != 0 || found != truncation) {
    fail(ErrorCode::Numerical, "build_kl_basis: symmetric eigen-solve failed (info=" + std::to_string(info) + ")");
  }

  // LAPACK returns ascending order.
  basis.eigenvalues.resize(truncation);
  basis.eigenfunctions.resize(n, truncation);
  for (int m = 0; m < truncation; ++m) {
    const int src = truncation - 1 - m;
    basis.eigenvalues[m] = w[src];
    for (int i = 0; i < n; ++i) basis.eigenfunctions(i, m) = z(i, src) / sqrt_w[i];
  }

  const double tol = 1e-12 * basis.eigenvalues.front();
  for (double lam : basis.eigenvalues) {
    if (lam < -tol) fail(ErrorCode::Numerical, "build_kl_basis: covariance matrix has a negative eigenvalue");
  }
  if (basis.eigenvalues.back() <= tol) {
    fail(ErrorCode::Numerical,
         "build_kl_basis: requested truncation exceeds the number of eigenvalues above the clamp tolerance");
  }

  // Guard against a faulty LAPACK backend: the leading and trailing pairs must
  // satisfy the discrete eigen-equation Σ_j w_j C(x_i, x_j) b(x_j) = λ b(x_i).
  // The weighted residual norm is estimated from an evenly spaced subset of
  // rows, which keeps the check far cheaper than the kernel assembly.
  const int stride = std::max(1, n / 256);
  for (int m : {0, truncation - 1}) {
    double residual = 0.0;
    int rows = 0;
    for (int i = 0; i < n; i += stride, ++rows) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        s += matern_cov(basis.quad_nodes[i], basis.quad_nodes[j], p) * basis.quad_weights[j] *
             basis.eigenfunctions(j, m);
      }
      const double r = s - basis.eigenvalues[m] * basis.eigenfunctions(i, m);
      residual += basis.quad_weights[i] * r * r;
    }
    residual *= static_cast<double>(n) / rows;
    if (!(std::sqrt(residual) <= 1e-8 * basis.eigenvalues.front())) {
      fail(ErrorCode::Numerical, "build_kl_basis: eigenpair residual check failed for mode " + std::to_string(m + 1));
    }
  }

  // Fix the sign convention so that bases are reproducible across builds:
  // the node value of largest magnitude is positive.
  for (int m = 0; m < truncation; ++m) {
    Eigen::Index idx = 0;
    basis.eigenfunctions.col(m).cwiseAbs().maxCoeff(&idx);
    if (basis.eigenfunctions(idx, m) < 0.0) basis.eigenfunctions.col(m) *= -1.0;
  }
  return basis;
}

Eigen::MatrixXd KLBasis::eigenfunctions_at(std::span<const Point2> points, int modes) const {
  if (modes < 0) modes = truncation;
  require(modes <= truncation, "eigenfunctions_at: more modes requested than the basis holds");
  const auto n_points = static_cast<Eigen::Index>(points.size());
  const auto n_nodes = static_cast<Eigen::Index>(quad_nodes.size());

  // Weighted node values divided by the eigenvalue: (1/λ_m) w_j b_m(x_j).
  Eigen::MatrixXd weighted(n_nodes, modes);
  for (int m = 0; m < modes; ++m) {
    for (Eigen::Index j = 0; j < n_nodes; ++j) {
      weighted(j, m) = quad_weights[j] * eigenfunctions(j, m) / eigenvalues[m];
    }
  }

  Eigen::MatrixXd out(n_points, modes);
  constexpr Eigen::Index block = 256;
  Eigen::MatrixXd kernel(block, n_nodes);
  for (Eigen::Index start = 0; start < n_points; start += block) {
    const Eigen::Index rows = std::min(block, n_points - start);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Point2 x = points[start + r];
      if (x.x < -1e-12 || x.x > 1.0 + 1e-12 || x.y < -1e-12 || x.y > 1.0 + 1e-12) {
        fail(ErrorCode::InvalidArgument, "eigenfunctions_at: point outside the unit square");
      }
      for (Eigen::Index j = 0; j < n_nodes; ++j) kernel(r, j) = matern_cov(x, quad_nodes[j], params);
    }
    out.middleRows(start, rows).noalias() = kernel.topRows(rows) * weighted;
  }
  return out;
}

Eigen::MatrixXd KLBasis::scaled_modes_at(std::span<const Point2> points, int modes) const {
  Eigen::MatrixXd phi = eigenfunctions_at(points, modes);
  for (Eigen::Index m = 0; m < phi.cols(); ++m) phi.col(m) *= std::sqrt(eigenvalues[m]);
  return phi;
}

std::vector<double> eval_field(const GaussianFieldRealisation& r, std::span<const Point2> points) {
  require(r.basis != nullptr, "eval_field: realisation has no basis");
  const int modes = static_cast<int>(r.coefficients.size());
  require(modes <= r.basis->truncation, "eval_field: more coefficients than basis modes");
  std::vector<double> out(points.size(), r.basis->mean);
  if (points.empty() || modes == 0) {
    for (const Point2& x : points) {
      if (x.x < -1e-12 || x.x > 1.0 + 1e-12 || x.y < -1e-12 || x.y > 1.0 + 1e-12) {
        fail(ErrorCode::InvalidArgument, "eval_field: point outside the unit square");
      }
    }
    return out;
  }
  const Eigen::MatrixXd phi = r.basis->scaled_modes_at(points, modes);
  const Eigen::Map<const Eigen::VectorXd> xi(r.coefficients.data(), modes);
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).array() += (phi * xi).array();
  return out;
}

namespace {

std::string hex_bits(double v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

constexpr char kMagic[8] = {'M', 'L', 'K', 'L', 'B', 'A', 'S', '1'};

template <class T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

std::string kl_cache_key(const MaternParams& p, int n_quad, int truncation) {
  return "kl_" + hex_bits(p.variance) + "_" + hex_bits(p.corr_length) + "_" + hex_bits(p.smoothness) + "_q" +
         std::to_string(n_quad) + "_m" + std::to_string(truncation) + ".bin";
}

void save_kl_basis(const KLBasis& basis, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write KL basis to " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_pod(os, basis.params.variance);
  write_pod(os, basis.params.corr_length);
  write_pod(os, basis.params.smoothness);
  const std::int32_t nq = basis.n_quad, m = basis.truncation;
  write_pod(os, nq);
  write_pod(os, m);
  write_pod(os, basis.mean);
  os.write(reinterpret_cast<const char*>(basis.eigenvalues.data()),
           static_cast<std::streamsize>(basis.eigenvalues.size() * sizeof(double)));
  for (const Point2& x : basis.quad_nodes) {
    write_pod(os, x.x);
    write_pod(os, x.y);
  }
  os.write(reinterpret_cast<const char*>(basis.quad_weights.data()),
           static_cast<std::streamsize>(basis.quad_weights.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(basis.eigenfunctions.data()),
           static_cast<std::streamsize>(basis.eigenfunctions.size() * sizeof(double)));
  if (!os) fail(ErrorCode::Io, "failed while writing KL basis to " + path.string());
}

KLBasis load_kl_basis(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open KL basis file " + path.string());
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + sizeof magic, kMagic)) {
    fail(ErrorCode::Io, "not a KL basis file: " + path.string());
  }
  KLBasis basis;
  read_pod(is, basis.params.variance);
  read_pod(is, basis.params.corr_length);
  read_pod(is, basis.params.smoothness);
  std::int32_t nq = 0, m = 0;
  read_pod(is, nq);
  read_pod(is, m);
  read_pod(is, basis.mean);
  if (!is || nq <= 0 || m <= 0 || m > nq * nq) fail(ErrorCode::Io, "corrupt KL basis header in " + path.string());
  basis.n_quad = nq;
  basis.truncation = m;
  const std::size_t n = static_cast<std::size_t>(nq) * nq;
  basis.eigenvalues.resize(m);
  is.read(reinterpret_cast<char*>(basis.eigenvalues.data()), static_cast<std::streamsize>(m * sizeof(double)));
  basis.quad_nodes.resize(n);
  for (Point2& x : basis.quad_nodes) {
    read_pod(is, x.x);
    read_pod(is, x.y);
  }
  basis.quad_weights.resize(n);
  is.read(reinterpret_cast<char*>(basis.quad_weights.data()), static_cast<std::streamsize>(n * sizeof(double)));
  basis.eigenfunctions.resize(static_cast<Eigen::Index>(n), m);
  is.read(reinterpret_cast<char*>(basis.eigenfunctions.data()),
          static_cast<std::streamsize>(basis.eigenfunctions.size() * sizeof(double)));
  if (!is) fail(ErrorCode::Io, "truncated KL basis file " + path.string());
  return basis;
}

KLBasis cached_kl_basis(const MaternParams& p, int n_quad, int truncation, const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return build_kl_basis(p, n_quad, truncation);
  const auto path = cache_dir / kl_cache_key(p, n_quad, truncation);
  if (std::filesystem::exists(path)) return load_kl_basis(path);
  KLBasis basis = build_kl_basis(p, n_quad, truncation);
  std::filesystem::create_directories(cache_dir);
  // Write to a temporary name first so concurrent readers never see a partial file.
  const auto tmp = path.string() + ".tmp";
  save_kl_basis(basis, tmp);
  std::filesystem::rename(tmp, path);
  return basis;
}

}  // namespace mlmcmc
