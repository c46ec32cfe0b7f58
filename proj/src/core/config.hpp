#pragma once

#include "core/data.hpp"
#include "core/estimator.hpp"
#include "core/fem.hpp"
#include "core/level_model.hpp"
#include "core/random_field.hpp"
#include "core/sampler.hpp"
#include "core/transform.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mlmcmc {

enum class ExperimentType { EigenDecay, RejectionRate, CostVariance, Reconstruction };

/// Beam: the elasticity forward model. Flat: likelihood ≡ 0 (prior sampling),
/// with the same QoI, used to check sampler correctness.
enum class LikelihoodModel { Beam, Flat };

struct LevelConfig {
  int kl_truncation = 0;    // M_ℓ
  int nx = 0;               // R_ℓ = nx × ny
  int ny = 0;
  int subsample_rate = 1;   // τ_ℓ (ignored on level 0)
  double pcn_beta = 0.2;    // β_ℓ
  double fidelity = 1e-8;   // σ_{F,ℓ}
  std::int64_t burn_in = -1;  // B_ℓ; negative: burn_in_fraction of the level's steps
  int store_stride = 1;

  friend bool operator==(const LevelConfig&, const LevelConfig&) = default;
};

struct HierarchyConfig {
  // [experiment]
  ExperimentType experiment = ExperimentType::CostVariance;
  std::string name = "experiment";
  int replicates = 4;
  std::uint64_t root_seed = 1;
  std::string output_dir = "output";
  int workers = 0;                    // 0: MLMCMC_WORKERS or hardware concurrency
  std::int64_t checkpoint_every = 0;  // level-0 iterations between checkpoints; 0 disables
  std::string kl_cache_dir;           // empty: <output_dir>/kl_cache

  // [geometry]
  BeamGeometry geometry;

  // [matern]
  MaternParams matern{4.0, 0.5, 1.5};
  int n_quad = 64;
  std::vector<double> smoothness_sweep;  // EigenDecay / RejectionRate; empty: {smoothness}
  int eigen_count = 100;                 // EigenDecay
  int fit_m_min = 10;
  int fit_m_max = 100;

  // [transform]
  GammaTransformParams transform;

  // [data]
  double fidelity = 1e-8;  // σ_F of the synthetic observations
  WeightingMode weighting = WeightingMode::Select;
  DataTreatment treatment = DataTreatment::LevelDependent;
  int truth_modes = 0;           // 0: finest M_L
  std::uint64_t data_seed = 0;   // 0: derived from root_seed
  LikelihoodModel likelihood = LikelihoodModel::Beam;

  // [sampler]
  std::int64_t coarse_chain_length = 200000;
  double burn_in_fraction = 0.1;
  QoiRegion qoi_region;

  // [levels]
  std::vector<LevelConfig> levels;

  // [cost] (CostVariance)
  bool compare_independent = true;
  double independent_chain_fraction = 0.1;  // level-independent rerun length relative to the main run
  int single_level_probe = 20;              // finest-level evaluations timed for the single-level reference

  // [reconstruction]
  int gallery_size = 4;

  void validate() const;
  /// Effective values of the optional settings.
  std::uint64_t effective_data_seed() const;
  int effective_truth_modes() const;
  std::filesystem::path effective_kl_cache_dir() const;
  std::vector<double> effective_smoothness_sweep() const;
  SamplerSettings sampler_settings() const;
  std::vector<LevelModelSpec> level_specs() const;
  std::vector<LevelGrid> level_grids() const;

  friend bool operator==(const HierarchyConfig&, const HierarchyConfig&) = default;
};

/// Parses the sectioned key = value format; unknown sections or keys are errors.
HierarchyConfig parse_config(const std::string& text);
HierarchyConfig load_config(const std::filesystem::path& path);
/// Writes every setting; parse_config(serialize_config(c)) == c.
std::string serialize_config(const HierarchyConfig& config);
void save_config(const HierarchyConfig& config, const std::filesystem::path& path);

std::string to_string(ExperimentType t);
std::string to_string(WeightingMode m);
std::string to_string(DataTreatment t);
std::string to_string(LikelihoodModel m);
std::string to_string(ConstitutiveLaw law);

}  // namespace mlmcmc
