#pragma once

#include "core/sampler.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mlmcmc {

/// Per-level summary of a multilevel run. For level 0, Y_0 = Q_0.
struct LevelStats {
  int level = 0;
  int kl_truncation = 0;
  int nx = 0;
  int ny = 0;
  std::int64_t n_samples = 0;  // post burn-in
  double mean_Y = 0.0;
  double var_Y = 0.0;
  double mean_Q = 0.0;
  double var_Q = 0.0;
  double rejection_rate = 0.0;
  double iat = 0.0;  // IAT of this level's Y series; NaN when too short or constant
  double mean_sample_cost = 0.0;  // seconds per step
};

/// Minimum series length accepted by integrated_autocorrelation_time.
inline constexpr std::size_t kMinIatLength = 100;

/// 1 + 2 Σ ρ̂(k), truncated by Geyer's initial positive sequence. Throws
/// InvalidArgument for fewer than kMinIatLength values or a constant series.
double integrated_autocorrelation_time(std::span<const double> series);

/// Unbiased sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> values);
double sample_mean(std::span<const double> values);

/// Y_ℓ series after burn-in (Q_ℓ − Q_{ℓ−1} paired values; Q_0 on level 0).
std::vector<double> correction_series(const ChainSet& chains, int level);
/// Q_ℓ series after burn-in.
std::vector<double> qoi_series(const ChainSet& chains, int level);

/// Σ_ℓ mean(Y_ℓ) over the post-burn-in per-step QoI records.
double telescopic_estimate(const ChainSet& chains);

/// Same estimator with a user QoI re-evaluated on the stored (thinned) paired
/// samples; qoi_at(level, coefficients) must evaluate Q_level.
using QoiFunction = std::function<double(int level, std::span<const double> coefficients)>;
double telescopic_estimate(const ChainSet& chains, const QoiFunction& qoi_at);

/// Per-level statistics. `grids` gives (M_ℓ, nx, ny) for reporting; may be empty.
struct LevelGrid {
  int kl_truncation = 0;
  int nx = 0;
  int ny = 0;
};
std::vector<LevelStats> level_statistics(const ChainSet& chains, std::span<const LevelGrid> grids = {});

/// Standard error of the telescopic estimate from one replicate:
/// sqrt(Σ_ℓ var(Y_ℓ) · iat_ℓ / n_ℓ), with iat_ℓ = 1 when it cannot be estimated.
double telescopic_standard_error(std::span<const LevelStats> stats);

/// Combination of independent replicate estimates.
struct PooledEstimate {
  double value = 0.0;
  double standard_error = 0.0;  // across replicates when R ≥ 2, else within-replicate
  std::size_t replicates = 0;
};
PooledEstimate pool_replicates(std::span<const double> estimates, std::span<const double> within_errors);

}  // namespace mlmcmc
