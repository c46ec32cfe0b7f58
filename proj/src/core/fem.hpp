#pragma once

#include "core/random_field.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <memory>
#include <span>
#include <vector>

namespace mlmcmc {

/// How the Lamé parameters enter the 2D constitutive matrix. `AsPrinted` uses
/// λ̃ = Eν/((1+ν)(1-2ν)) and μ̃ = E/(2(1+ν)) directly; `PlaneStress` replaces λ̃
/// by the reduced 2λ̃μ̃/(λ̃+2μ̃).
enum class ConstitutiveLaw { AsPrinted, PlaneStress };

struct BeamGeometry {
  double length = 3.0;       // m
  double height = 0.3;       // m
  double poisson = 0.25;
  double density = 2500.0;   // kg/m^3, recorded only; self-weight is not applied
  double load_total = 1e3;   // N, downward resultant over the centre third of the top edge
  double e_ref = 30e9;       // Pa
  ConstitutiveLaw law = ConstitutiveLaw::AsPrinted;

  void validate() const;

  friend bool operator==(const BeamGeometry&, const BeamGeometry&) = default;
};

/// Structured rectangular mesh. Node (i, j) sits at (i·hx, j·hy) and has id
/// i·(ny+1) + j; element (i, j) has id i·ny + j and nodes listed
/// counter-clockwise from its lower-left corner.
struct Mesh {
  int nx = 0;
  int ny = 0;
  double length = 0.0;
  double height = 0.0;
  std::vector<Point2> node_coords;
  std::vector<std::array<int, 4>> elements;
  /// Bottom edge left to right, then top edge left to right.
  std::vector<int> edge_node_ids;

  double hx() const { return length / nx; }
  double hy() const { return height / ny; }
  int node_id(int i, int j) const { return i * (ny + 1) + j; }
  int element_id(int i, int j) const { return i * ny + j; }
  int node_count() const { return static_cast<int>(node_coords.size()); }
  int element_count() const { return static_cast<int>(elements.size()); }
  Point2 centroid(int e) const;
  /// Element centroids mapped affinely onto the unit square.
  std::vector<Point2> unit_square_centroids() const;
};

Mesh build_rectangular_mesh(int nx, int ny, double length, double height);

/// Beam mesh; nx must be a positive multiple of 3 so that the loaded and
/// observed centre third aligns with element boundaries.
Mesh build_mesh(int nx, int ny, const BeamGeometry& geom);

struct StiffnessField {
  std::vector<double> element_values;  // normalised Young's modulus per element
};

struct DisplacementField {
  std::vector<double> values;  // (u_x, u_y) per node
};

struct LameParameters {
  double lambda = 0.0;
  double mu = 0.0;
};

LameParameters lame_parameters(double youngs_modulus, double poisson, ConstitutiveLaw law);

using ElementMatrix = Eigen::Matrix<double, 8, 8>;

/// 2x2 Gauss stiffness of an hx-by-hy bilinear rectangle.
ElementMatrix element_stiffness(double hx, double hy, const LameParameters& lame);

/// Full (unconstrained) global stiffness with per-element modulus
/// `element_values[e] * geom.e_ref`.
Eigen::SparseMatrix<double> assemble_stiffness(const Mesh& mesh, std::span<const double> element_values,
                                               const BeamGeometry& geom);

/// Consistent nodal forces of the line load on all dofs.
Eigen::VectorXd beam_load_vector(const Mesh& mesh, const BeamGeometry& geom);

/// Reusable clamped-beam solver for one mesh. The sparsity pattern and the
/// symbolic factorisation are computed once; each solve reassembles values
/// and refactorises. Not thread-safe; use one instance per chain.
class BeamSolver {
 public:
  BeamSolver(std::shared_ptr<const Mesh> mesh, const BeamGeometry& geom);

  /// Solves for the displacement under the configured line load.
  DisplacementField solve(std::span<const double> element_values);
  void solve_into(std::span<const double> element_values, std::span<double> displacement);

  /// Assembles the constrained (free-dof) matrix, lower triangle only, with
  /// rows and columns in nested-dissection order (see sparse_index()).
  const Eigen::SparseMatrix<double>& assemble_reduced(std::span<const double> element_values);

  /// Dense banded LDL^T for small systems, sparse LDL^T up to
  /// kDirectSolverLimit free dofs, conjugate gradients beyond.
  enum class Kind { Banded, SparseDirect, Iterative };

  const Mesh& mesh() const { return *mesh_; }
  int free_dof_count() const { return static_cast<int>(load_.size()); }
  /// Row of assemble_reduced()'s matrix holding each free dof (free dofs counted in node order).
  const std::vector<int>& sparse_index() const { return sparse_index_; }
  Kind kind() const { return kind_; }
  bool uses_iterative_solver() const { return kind_ == Kind::Iterative; }
  /// Forces a solver kind (tests and benchmarks).
  void set_kind(Kind kind);

  static constexpr int kDirectSolverLimit = 100000;
  /// Banded factorisation is used while n · bandwidth² stays below this.
  static constexpr double kBandedWorkLimit = 1e8;

 private:
  std::shared_ptr<const Mesh> mesh_;
  BeamGeometry geom_;
  int first_free_dof_ = 0;
  std::array<double, 64> k_ref_{};
  std::vector<std::array<int, 64>> slots_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::VectorXd load_;
  Eigen::VectorXd solution_;
  std::vector<int> sparse_index_;
  Eigen::VectorXd sparse_rhs_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> ldlt_;
  bool pattern_analyzed_ = false;
  Kind kind_ = Kind::SparseDirect;
  // Banded storage: column c holds A(c + k, c) at c * (bandwidth_ + 1) + k.
  int bandwidth_ = 0;
  std::vector<double> band_;
  std::vector<std::array<int, 64>> band_slots_;
  std::vector<double> scratch_;

  void solve_banded(std::span<const double> element_values);
};

DisplacementField assemble_and_solve(const Mesh& mesh, const StiffnessField& field, const BeamGeometry& geom);

/// (u_x, u_y) pairs at mesh.edge_node_ids, in that order.
std::vector<double> observe_edges(const Mesh& mesh, const DisplacementField& disp);
void observe_edges_into(const Mesh& mesh, std::span<const double> displacement, std::span<double> out);

/// Region given as fractions of the beam length and height.
struct QoiRegion {
  double x_min = 1.0 / 3.0;
  double x_max = 2.0 / 3.0;
  double y_min = 0.0;
  double y_max = 0.5;

  friend bool operator==(const QoiRegion&, const QoiRegion&) = default;
};

std::vector<int> qoi_region_elements(const Mesh& mesh, const QoiRegion& region = {});

/// Mean element value over elements whose centroids lie in the region.
double qoi_region_average(const Mesh& mesh, std::span<const double> element_values, const QoiRegion& region = {});

/// Bilinear interpolation of a nodal displacement field onto every node of
/// another mesh covering the same rectangle.
void prolongate_into(const Mesh& coarse, std::span<const double> coarse_disp, const Mesh& fine,
                     std::span<double> fine_disp);
DisplacementField prolongate(const Mesh& coarse, const DisplacementField& disp, const Mesh& fine);

}  // namespace mlmcmc
