#pragma once

#include "core/config.hpp"
#include "core/data.hpp"
#include "core/level_model.hpp"
#include "core/random_field.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mlmcmc {

/// Command-line style overrides and run controls.
struct RunOptions {
  std::optional<int> replicates;
  std::optional<std::uint64_t> root_seed;
  std::optional<std::string> output_dir;
  std::optional<int> workers;
  /// Stop every replicate once it has completed this many level-0 iterations
  /// (writing a checkpoint); negative runs to completion.
  std::int64_t halt_after = -1;
  std::function<void(const std::string&)> log;
};

struct RunSummary {
  std::filesystem::path output_dir;
  bool complete = false;
  std::string summary_json;  // also written to <output_dir>/summary.json
};

/// Runs the configured experiment. The output directory must not already
/// hold a run (use resume_experiment for that).
RunSummary run_experiment(HierarchyConfig config, const RunOptions& options = {});

/// Continues a halted or interrupted run. `path` is the run's output
/// directory or any checkpoint file inside it. Only workers, halt_after and
/// log are taken from `options`.
RunSummary resume_experiment(const std::filesystem::path& path, const RunOptions& options = {});

/// Re-derives every aggregate output from the stored chains of a complete run.
RunSummary report_experiment(const std::filesystem::path& output_dir);

/// Shared, immutable inputs of one hierarchy: KL basis, synthetic
/// observations of the ground truth, and the level models.
struct ProblemSetup {
  HierarchyConfig config;
  std::shared_ptr<const KLBasis> basis;
  std::vector<double> truth_coefficients;
  std::vector<double> truth_stiffness;  // on the finest mesh
  ObservationSet observations;
  std::vector<std::shared_ptr<const BeamLevelModel>> models;
};

/// Ground truth ξ ~ N(0, I) from the (root_seed, Truth) stream with
/// effective_truth_modes() coefficients; observation noise from
/// effective_data_seed().
ProblemSetup build_problem(const HierarchyConfig& config);

/// One evaluator per level for a single chain (Beam or Flat likelihood).
std::vector<std::unique_ptr<LevelEvaluator>> make_evaluators(const ProblemSetup& setup);

/// Worker count: explicit override, then config, then MLMCMC_WORKERS, then
/// the hardware concurrency.
int effective_workers(const HierarchyConfig& config, std::optional<int> override_workers = std::nullopt);

/// Least-squares fit of log λ_m = a + b log m over m ∈ [m_min, m_max] (1-based).
struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
};
PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y);
PowerLawFit fit_eigen_decay(std::span<const double> eigenvalues, int m_min, int m_max);

/// Element raster CSV: columns i,j,value, element (i, j) of an nx × ny mesh.
void write_raster(const std::filesystem::path& path, const Mesh& mesh, std::span<const double> values);

}  // namespace mlmcmc
