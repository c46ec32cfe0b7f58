#include "core/fem.hpp"

#include "core/error.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>

namespace mlmcmc {

void BeamGeometry::validate() const {
  if (!(length > 0.0) || !(height > 0.0)) fail(ErrorCode::Config, "beam dimensions must be positive");
  if (!(poisson > 0.0 && poisson < 0.5)) fail(ErrorCode::Config, "poisson ratio must lie in (0, 0.5)");
  if (!(e_ref > 0.0)) fail(ErrorCode::Config, "reference Young's modulus must be positive");
  if (!std::isfinite(load_total)) fail(ErrorCode::Config, "load must be finite");
}

Point2 Mesh::centroid(int e) const {
  const int i = e / ny;
  const int j = e % ny;
  return {(i + 0.5) * hx(), (j + 0.5) * hy()};
}

std::vector<Point2> Mesh::unit_square_centroids() const {
  std::vector<Point2> out(elements.size());
  for (int e = 0; e < element_count(); ++e) {
    const Point2 c = centroid(e);
    out[e] = {c.x / length, c.y / height};
  }
  return out;
}

Mesh build_rectangular_mesh(int nx, int ny, double length, double height) {
  require(nx >= 1 && ny >= 1, "mesh needs at least one element in each direction");
  require(length > 0.0 && height > 0.0, "mesh dimensions must be positive");
  Mesh mesh;
  mesh.nx = nx;
  mesh.ny = ny;
  mesh.length = length;
  mesh.height = height;
  mesh.node_coords.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j <= ny; ++j) {
      mesh.node_coords.push_back({length * i / nx, height * j / ny});
    }
  }
  mesh.elements.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      mesh.elements.push_back(
          {mesh.node_id(i, j), mesh.node_id(i + 1, j), mesh.node_id(i + 1, j + 1), mesh.node_id(i, j + 1)});
    }
  }
  for (int i = 0; i <= nx; ++i) mesh.edge_node_ids.push_back(mesh.node_id(i, 0));
  for (int i = 0; i <= nx; ++i) mesh.edge_node_ids.push_back(mesh.node_id(i, ny));
  return mesh;
}

Mesh build_mesh(int nx, int ny, const BeamGeometry& geom) {
  if (nx < 3 || nx % 3 != 0) fail(ErrorCode::InvalidArgument, "beam mesh: nx must be a positive multiple of 3");
  if (ny < 1) fail(ErrorCode::InvalidArgument, "beam mesh: ny must be positive");
  return build_rectangular_mesh(nx, ny, geom.length, geom.height);
}

LameParameters lame_parameters(double youngs_modulus, double poisson, ConstitutiveLaw law) {
  LameParameters p;
  p.lambda = youngs_modulus * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  p.mu = youngs_modulus / (2.0 * (1.0 + poisson));
  if (law == ConstitutiveLaw::PlaneStress) p.lambda = 2.0 * p.lambda * p.mu / (p.lambda + 2.0 * p.mu);
  return p;
}

ElementMatrix element_stiffness(double hx, double hy, const LameParameters& lame) {
  Eigen::Matrix3d d;
  d << lame.lambda + 2.0 * lame.mu, lame.lambda, 0.0,
       lame.lambda, lame.lambda + 2.0 * lame.mu, 0.0,
       0.0, 0.0, lame.mu;

  static constexpr double xi_n[4] = {-1.0, 1.0, 1.0, -1.0};
  static constexpr double eta_n[4] = {-1.0, -1.0, 1.0, 1.0};
  const double g = 1.0 / std::sqrt(3.0);
  const double det_j = 0.25 * hx * hy;

  ElementMatrix k = ElementMatrix::Zero();
  for (double xi : {-g, g}) {
    for (double eta : {-g, g}) {
      Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
      for (int a = 0; a < 4; ++a) {
        const double dndx = 0.25 * xi_n[a] * (1.0 + eta_n[a] * eta) * 2.0 / hx;
        const double dndy = 0.25 * eta_n[a] * (1.0 + xi_n[a] * xi) * 2.0 / hy;
        b(0, 2 * a) = dndx;
        b(1, 2 * a + 1) = dndy;
        b(2, 2 * a) = dndy;
        b(2, 2 * a + 1) = dndx;
      }
      k.noalias() += b.transpose() * d * b * det_j;
    }
  }
  return k;
}

Eigen::SparseMatrix<double> assemble_stiffness(const Mesh& mesh, std::span<const double> element_values,
                                               const BeamGeometry& geom) {
  require(element_values.size() == mesh.elements.size(), "assemble_stiffness: field does not match mesh");
  const ElementMatrix k_ref = element_stiffness(mesh.hx(), mesh.hy(), lame_parameters(1.0, geom.poisson, geom.law));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(mesh.elements.size() * 64);
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double modulus = element_values[e] * geom.e_ref;
    const auto& nodes = mesh.elements[e];
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        triplets.emplace_back(2 * nodes[a / 2] + a % 2, 2 * nodes[b / 2] + b % 2, modulus * k_ref(a, b));
      }
    }
  }
  const int n = 2 * mesh.node_count();
  Eigen::SparseMatrix<double> k(n, n);
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

Eigen::VectorXd beam_load_vector(const Mesh& mesh, const BeamGeometry& geom) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * mesh.node_count());
  const double x_lo = mesh.length / 3.0;
  const double x_hi = 2.0 * mesh.length / 3.0;
  const double q = geom.load_total / (x_hi - x_lo);
  const double tol = 1e-9 * mesh.hx();
  for (int i = 0; i < mesh.nx; ++i) {
    const double a = i * mesh.hx();
    const double b = (i + 1) * mesh.hx();
    if (a < x_lo - tol || b > x_hi + tol) continue;
    const double half = 0.5 * q * (b - a);
    f(2 * mesh.node_id(i, mesh.ny) + 1) -= half;
    f(2 * mesh.node_id(i + 1, mesh.ny) + 1) -= half;
  }
  return f;
}

namespace {

// Geometric nested dissection of the node block [i0, i1) × [j0, j1) of a grid
// with nj nodes per column: both halves first, then the separating line.
void nested_dissection(int i0, int i1, int j0, int j1, int nj, std::vector<int>& order) {
  const int wi = i1 - i0, wj = j1 - j0;
  if (wi <= 0 || wj <= 0) return;
  if (wi * wj <= 16) {
    for (int i = i0; i < i1; ++i)
      for (int j = j0; j < j1; ++j) order.push_back(i * nj + j);
    return;
  }
  if (wi >= wj) {
    const int s = i0 + wi / 2;
    nested_dissection(i0, s, j0, j1, nj, order);
    nested_dissection(s + 1, i1, j0, j1, nj, order);
    for (int j = j0; j < j1; ++j) order.push_back(s * nj + j);
  } else {
    const int s = j0 + wj / 2;
    nested_dissection(i0, i1, j0, s, nj, order);
    nested_dissection(i0, i1, s + 1, j1, nj, order);
    for (int i = i0; i < i1; ++i) order.push_back(i * nj + s);
  }
}

}  // namespace

BeamSolver::BeamSolver(std::shared_ptr<const Mesh> mesh, const BeamGeometry& geom)
    : mesh_(std::move(mesh)), geom_(geom) {
  geom_.validate();
  const Mesh& m = *mesh_;
  require(m.nx >= 2, "beam solver: need at least one interior node column");

  // Both end columns are clamped; the free dofs are contiguous in node order.
  first_free_dof_ = 2 * (m.ny + 1);
  const int n_free = 2 * m.node_count() - 2 * first_free_dof_;

  const ElementMatrix k_ref = element_stiffness(m.hx(), m.hy(), lame_parameters(1.0, geom_.poisson, geom_.law));
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) k_ref_[a * 8 + b] = k_ref(a, b);

  auto reduced = [&](int node, int comp) {
    const int dof = 2 * node + comp - first_free_dof_;
    return (dof >= 0 && dof < n_free) ? dof : -1;
  };

  // The sparse factorisation runs on the nested-dissection ordering of the
  // free node columns, which keeps the fill close to the 2D optimum.
  std::vector<int> node_order;
  nested_dissection(0, m.nx - 1, 0, m.ny + 1, m.ny + 1, node_order);
  sparse_index_.resize(n_free);
  for (std::size_t k = 0; k < node_order.size(); ++k) {
    sparse_index_[2 * node_order[k]] = static_cast<int>(2 * k);
    sparse_index_[2 * node_order[k] + 1] = static_cast<int>(2 * k + 1);
  }
  auto sparse = [&](int node, int comp) {
    const int r = reduced(node, comp);
    return r >= 0 ? sparse_index_[r] : -1;
  };

  std::vector<Eigen::Triplet<double>> pattern;
  pattern.reserve(m.elements.size() * 36);
  for (const auto& nodes : m.elements) {
    for (int a = 0; a < 8; ++a) {
      const int r = sparse(nodes[a / 2], a % 2);
      if (r < 0) continue;
      for (int b = 0; b < 8; ++b) {
        const int c = sparse(nodes[b / 2], b % 2);
        if (c < 0 || r < c) continue;
        pattern.emplace_back(r, c, 1.0);
      }
    }
  }
  matrix_.resize(n_free, n_free);
  matrix_.setFromTriplets(pattern.begin(), pattern.end());
  matrix_.makeCompressed();

  slots_.resize(m.elements.size());
  const int* outer = matrix_.outerIndexPtr();
  const int* inner = matrix_.innerIndexPtr();
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto& nodes = m.elements[e];
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        const int r = sparse(nodes[a / 2], a % 2);
        const int c = sparse(nodes[b / 2], b % 2);
        int slot = -1;
        if (r >= 0 && c >= 0 && r >= c) {
          const int* first = inner + outer[c];
          const int* last = inner + outer[c + 1];
          const int* it = std::lower_bound(first, last, r);
          slot = static_cast<int>(it - inner);
        }
        slots_[e][a * 8 + b] = slot;
      }
    }
  }

  // Node (i, j) couples to (i ± 1, j ± 1), so |r - c| ≤ 2 (ny + 2) + 1.
  bandwidth_ = 0;
  band_slots_.resize(m.elements.size());
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto& nodes = m.elements[e];
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        const int r = reduced(nodes[a / 2], a % 2);
        const int c = reduced(nodes[b / 2], b % 2);
        if (r >= 0 && c >= 0 && r >= c) bandwidth_ = std::max(bandwidth_, r - c);
      }
    }
  }
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto& nodes = m.elements[e];
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        const int r = reduced(nodes[a / 2], a % 2);
        const int c = reduced(nodes[b / 2], b % 2);
        band_slots_[e][a * 8 + b] = (r >= 0 && c >= 0 && r >= c) ? c * (bandwidth_ + 1) + (r - c) : -1;
      }
    }
  }

  const Eigen::VectorXd f = beam_load_vector(m, geom_);
  load_ = f.segment(first_free_dof_, n_free);
  const double band_work = static_cast<double>(n_free) * bandwidth_ * bandwidth_;
  set_kind(n_free > kDirectSolverLimit ? Kind::Iterative
                                       : (band_work <= kBandedWorkLimit ? Kind::Banded : Kind::SparseDirect));
}

void BeamSolver::set_kind(Kind kind) {
  kind_ = kind;
  if (kind_ == Kind::SparseDirect && !pattern_analyzed_) {
    ldlt_.analyzePattern(matrix_);
    pattern_analyzed_ = true;
  }
  if (kind_ == Kind::Banded) band_.assign(static_cast<std::size_t>(load_.size()) * (bandwidth_ + 1), 0.0);
}

void BeamSolver::solve_banded(std::span<const double> element_values) {
  require(element_values.size() == mesh_->elements.size(), "beam solver: field does not match mesh");
  const int n = static_cast<int>(load_.size());
  const int w = bandwidth_ + 1;
  double* a = band_.data();
  std::fill(band_.begin(), band_.end(), 0.0);
  for (std::size_t e = 0; e < band_slots_.size(); ++e) {
    const double modulus = element_values[e] * geom_.e_ref;
    if (!(modulus > 0.0) || !std::isfinite(modulus)) {
      fail(ErrorCode::Solver, "beam solver: element stiffness must be positive and finite");
    }
    const auto& slot = band_slots_[e];
    for (int k = 0; k < 64; ++k) {
      if (slot[k] >= 0) a[slot[k]] += modulus * k_ref_[k];
    }
  }

  // Right-looking LDL^T within the band: column j is replaced by (d_j, l_j).
  std::vector<double>& tmp = scratch_;
  tmp.resize(static_cast<std::size_t>(w));
  for (int j = 0; j < n; ++j) {
    double* col = a + static_cast<std::size_t>(j) * w;
    const double d = col[0];
    if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorCode::Solver, "beam solver: stiffness matrix is not positive definite");
    const int len = std::min(bandwidth_, n - 1 - j);
    double* __restrict t = tmp.data();
    for (int k = 1; k <= len; ++k) {
      t[k] = col[k];
      col[k] /= d;
    }
    for (int c = 1; c <= len; ++c) {
      double* __restrict target = a + static_cast<std::size_t>(j + c) * w - c;
      const double lc = col[c];
      for (int r = c; r <= len; ++r) target[r] -= t[r] * lc;
    }
  }

  solution_ = load_;
  double* x = solution_.data();
  for (int j = 0; j < n; ++j) {
    const double* col = a + static_cast<std::size_t>(j) * w;
    const int len = std::min(bandwidth_, n - 1 - j);
    const double xj = x[j];
    for (int k = 1; k <= len; ++k) x[j + k] -= col[k] * xj;
  }
  for (int j = 0; j < n; ++j) x[j] /= a[static_cast<std::size_t>(j) * w];
  for (int j = n - 1; j >= 0; --j) {
    const double* col = a + static_cast<std::size_t>(j) * w;
    const int len = std::min(bandwidth_, n - 1 - j);
    double s = x[j];
    for (int k = 1; k <= len; ++k) s -= col[k] * x[j + k];
    x[j] = s;
  }
}

const Eigen::SparseMatrix<double>& BeamSolver::assemble_reduced(std::span<const double> element_values) {
  require(element_values.size() == mesh_->elements.size(), "beam solver: field does not match mesh");
  double* values = matrix_.valuePtr();
  std::fill(values, values + matrix_.nonZeros(), 0.0);
  for (std::size_t e = 0; e < slots_.size(); ++e) {
    const double modulus = element_values[e] * geom_.e_ref;
    if (!(modulus > 0.0) || !std::isfinite(modulus)) {
      fail(ErrorCode::Solver, "beam solver: element stiffness must be positive and finite");
    }
    const auto& slot = slots_[e];
    for (int k = 0; k < 64; ++k) {
      if (slot[k] >= 0) values[slot[k]] += modulus * k_ref_[k];
    }
  }
  return matrix_;
}

void BeamSolver::solve_into(std::span<const double> element_values, std::span<double> displacement) {
  require(displacement.size() == 2 * static_cast<std::size_t>(mesh_->node_count()),
          "beam solver: displacement buffer has the wrong size");
  if (kind_ == Kind::Banded) {
    solve_banded(element_values);
  } else {
    assemble_reduced(element_values);
    const Eigen::Index n = load_.size();
    sparse_rhs_.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) sparse_rhs_(sparse_index_[k]) = load_(k);
    Eigen::VectorXd y;
    if (kind_ == Kind::SparseDirect) {
      ldlt_.factorize(matrix_);
      if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > 0.0)) {
        fail(ErrorCode::Solver, "beam solver: stiffness matrix is not positive definite");
      }
      y = ldlt_.solve(sparse_rhs_);
    } else {
      Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower> cg;
      cg.setTolerance(1e-10);
      cg.setMaxIterations(20 * static_cast<int>(n));
      cg.compute(matrix_);
      y = cg.solve(sparse_rhs_);
      if (cg.info() != Eigen::Success) fail(ErrorCode::Solver, "beam solver: conjugate gradient did not converge");
    }
    solution_.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) solution_(k) = y(sparse_index_[k]);
  }
  std::fill(displacement.begin(), displacement.end(), 0.0);
  std::copy(solution_.data(), solution_.data() + solution_.size(), displacement.begin() + first_free_dof_);
}

DisplacementField BeamSolver::solve(std::span<const double> element_values) {
  DisplacementField out;
  out.values.resize(2 * static_cast<std::size_t>(mesh_->node_count()));
  solve_into(element_values, out.values);
  return out;
}

DisplacementField assemble_and_solve(const Mesh& mesh, const StiffnessField& field, const BeamGeometry& geom) {
  BeamSolver solver(std::make_shared<const Mesh>(mesh), geom);
  return solver.solve(field.element_values);
}

void observe_edges_into(const Mesh& mesh, std::span<const double> displacement, std::span<double> out) {
  require(out.size() == 2 * mesh.edge_node_ids.size(), "observe_edges: output has the wrong size");
  require(displacement.size() == 2 * static_cast<std::size_t>(mesh.node_count()),
          "observe_edges: displacement does not match mesh");
  for (std::size_t k = 0; k < mesh.edge_node_ids.size(); ++k) {
    const int node = mesh.edge_node_ids[k];
    out[2 * k] = displacement[2 * node];
    out[2 * k + 1] = displacement[2 * node + 1];
  }
}

std::vector<double> observe_edges(const Mesh& mesh, const DisplacementField& disp) {
  std::vector<double> out(2 * mesh.edge_node_ids.size());
  observe_edges_into(mesh, disp.values, out);
  return out;
}

std::vector<int> qoi_region_elements(const Mesh& mesh, const QoiRegion& region) {
  std::vector<int> ids;
  const double tol = 1e-12;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const Point2 c = mesh.centroid(e);
    const double fx = c.x / mesh.length;
    const double fy = c.y / mesh.height;
    if (fx >= region.x_min - tol && fx <= region.x_max + tol && fy >= region.y_min - tol && fy <= region.y_max + tol) {
      ids.push_back(e);
    }
  }
  return ids;
}

double qoi_region_average(const Mesh& mesh, std::span<const double> element_values, const QoiRegion& region) {
  require(element_values.size() == mesh.elements.size(), "qoi_region_average: field does not match mesh");
  const std::vector<int> ids = qoi_region_elements(mesh, region);
  if (ids.empty()) fail(ErrorCode::InvalidArgument, "qoi_region_average: region contains no element centroid");
  double sum = 0.0;
  for (int e : ids) sum += element_values[e];
  return sum / static_cast<double>(ids.size());
}

void prolongate_into(const Mesh& coarse, std::span<const double> coarse_disp, const Mesh& fine,
                     std::span<double> fine_disp) {
  require(coarse_disp.size() == 2 * static_cast<std::size_t>(coarse.node_count()),
          "prolongate: displacement does not match the coarse mesh");
  require(fine_disp.size() == 2 * static_cast<std::size_t>(fine.node_count()),
          "prolongate: output does not match the fine mesh");
  const double hx = coarse.hx();
  const double hy = coarse.hy();
  for (int n = 0; n < fine.node_count(); ++n) {
    const Point2 p = fine.node_coords[n];
    const int i = std::clamp(static_cast<int>(std::floor(p.x / hx)), 0, coarse.nx - 1);
    const int j = std::clamp(static_cast<int>(std::floor(p.y / hy)), 0, coarse.ny - 1);
    const double s = p.x / hx - i;
    const double t = p.y / hy - j;
    const double w00 = (1.0 - s) * (1.0 - t), w10 = s * (1.0 - t), w11 = s * t, w01 = (1.0 - s) * t;
    const int n00 = coarse.node_id(i, j), n10 = coarse.node_id(i + 1, j);
    const int n11 = coarse.node_id(i + 1, j + 1), n01 = coarse.node_id(i, j + 1);
    for (int c = 0; c < 2; ++c) {
      fine_disp[2 * n + c] = w00 * coarse_disp[2 * n00 + c] + w10 * coarse_disp[2 * n10 + c] +
                             w11 * coarse_disp[2 * n11 + c] + w01 * coarse_disp[2 * n01 + c];
    }
  }
}

DisplacementField prolongate(const Mesh& coarse, const DisplacementField& disp, const Mesh& fine) {
  DisplacementField out;
  out.values.resize(2 * static_cast<std::size_t>(fine.node_count()));
  prolongate_into(coarse, disp.values, fine, out.values);
  return out;
}

}  // namespace mlmcmc
