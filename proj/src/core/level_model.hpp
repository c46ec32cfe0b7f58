#pragma once

#include "core/data.hpp"
#include "core/fem.hpp"
#include "core/random_field.hpp"
#include "core/sampler.hpp"
#include "core/transform.hpp"

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <vector>

namespace mlmcmc {

/// How coarse levels compare their model output with the observations.
/// LevelDependent: the level mesh's edge output against W_ℓ(u_obs) with N_ℓ.
/// LevelIndependent: the level solution interpolated onto the finest mesh and
/// compared with the full u_obs with N_L.
enum class DataTreatment { LevelDependent, LevelIndependent };

struct LevelModelSpec {
  int level = 0;
  int nx = 0;
  int ny = 0;
  int kl_truncation = 0;
  double fidelity = 1e-8;  // σ_{F,ℓ}
  WeightingMode weighting = WeightingMode::Select;
  DataTreatment treatment = DataTreatment::LevelDependent;
};

/// Immutable per-level forward model and likelihood data, shareable between
/// chains.
class BeamLevelModel {
 public:
  BeamLevelModel(const KLBasis& basis, const LevelModelSpec& spec, const BeamGeometry& geom,
                 const GammaTransformParams& transform, const QoiRegion& region, const ObservationSet& obs,
                 std::shared_ptr<const Mesh> finest);

  const LevelModelSpec& spec() const { return spec_; }
  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const Mesh& finest_mesh() const { return *finest_; }
  const BeamGeometry& geometry() const { return geom_; }
  int dimension() const { return spec_.kl_truncation; }
  /// Observation points entering the likelihood (N_ℓ, or N_L when level independent).
  std::size_t observation_count() const { return n_obs_; }
  const std::vector<double>& level_observations() const { return obs_level_; }
  bool compares_on_finest_mesh() const { return on_finest_; }

  /// Gaussian field at element centroids for the leading coefficients.
  void gaussian_field_into(std::span<const double> coefficients, std::span<double> out) const;
  /// Normalised Young's modulus per element.
  void stiffness_into(std::span<const double> coefficients, std::span<double> out) const;
  std::vector<double> stiffness(std::span<const double> coefficients) const;
  /// Region-average stiffness of a given element field.
  double qoi_of_field(std::span<const double> stiffness) const;
  double qoi(std::span<const double> coefficients) const;

  /// Log-likelihood of a nodal displacement on this level's mesh. `scratch`
  /// must hold 2 × finest node count when the comparison is on the finest mesh.
  double log_likelihood_of(std::span<const double> displacement, std::vector<double>& model_obs,
                           std::vector<double>& scratch) const;

 private:
  LevelModelSpec spec_;
  BeamGeometry geom_;
  GammaTransformParams transform_;
  std::shared_ptr<const Mesh> mesh_;
  std::shared_ptr<const Mesh> finest_;
  Eigen::MatrixXd modes_;  // elements × M_ℓ, columns scaled by sqrt(λ_m)
  double mean_ = 0.0;
  std::vector<int> qoi_elements_;
  std::vector<double> obs_level_;
  std::size_t n_obs_ = 0;
  bool on_finest_ = false;
  bool same_as_finest_ = false;
};

/// Wall-clock split of one evaluator's work.
struct EvaluationTimings {
  double field_seconds = 0.0;
  double solve_seconds = 0.0;
  double likelihood_seconds = 0.0;
  std::int64_t evaluations = 0;
};

/// Per-chain evaluator owning the solver workspace.
class BeamLevelEvaluator final : public LevelEvaluator {
 public:
  explicit BeamLevelEvaluator(std::shared_ptr<const BeamLevelModel> model);

  int dimension() const override { return model_->dimension(); }
  Evaluation evaluate(std::span<const double> coefficients) override;

  const BeamLevelModel& model() const { return *model_; }
  const EvaluationTimings& timings() const { return timings_; }
  /// Displacement of the last evaluation.
  const std::vector<double>& last_displacement() const { return displacement_; }

 private:
  std::shared_ptr<const BeamLevelModel> model_;
  BeamSolver solver_;
  std::vector<double> stiffness_;
  std::vector<double> displacement_;
  std::vector<double> model_obs_;
  std::vector<double> scratch_;
  EvaluationTimings timings_;
};

/// Builds all level models from one shared KL basis (which must hold at least
/// max M_ℓ modes). The finest mesh is that of the last level.
std::vector<std::shared_ptr<const BeamLevelModel>> build_level_models(
    const KLBasis& basis, const std::vector<LevelModelSpec>& specs, const BeamGeometry& geom,
    const GammaTransformParams& transform, const QoiRegion& region, const ObservationSet& obs);

}  // namespace mlmcmc
