#include "core/estimator.hpp"

#include "core/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numeric>

namespace mlmcmc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Biased autocovariance γ(k) = (1/n) Σ (x_i − x̄)(x_{i+k} − x̄), k < n, via FFT.
std::vector<double> autocovariance(std::span<const double> series) {
  const std::size_t n = series.size();
  std::size_t size = 1;
  while (size < 2 * n) size <<= 1;
  const double mean = sample_mean(series);

  double* in = fftw_alloc_real(size);
  fftw_complex* spec = fftw_alloc_complex(size / 2 + 1);
  fftw_plan forward, backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(size), in, spec, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(static_cast<int>(size), spec, in, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < size; ++i) in[i] = i < n ? series[i] - mean : 0.0;
  fftw_execute(forward);
  for (std::size_t k = 0; k < size / 2 + 1; ++k) {
    const double re = spec[k][0], im = spec[k][1];
    spec[k][0] = re * re + im * im;
    spec[k][1] = 0.0;
  }
  fftw_execute(backward);
  std::vector<double> gamma(n);
  for (std::size_t k = 0; k < n; ++k) gamma[k] = in[k] / (static_cast<double>(size) * static_cast<double>(n));
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  fftw_free(in);
  fftw_free(spec);
  return gamma;
}

std::size_t first_kept(std::int64_t burn_in) { return burn_in > 0 ? static_cast<std::size_t>(burn_in) : 0; }

}  // namespace

double sample_mean(std::span<const double> values) {
  if (values.empty()) return kNaN;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = sample_mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s / static_cast<double>(values.size() - 1);
}

double integrated_autocorrelation_time(std::span<const double> series) {
  if (series.size() < kMinIatLength) {
    fail(ErrorCode::InvalidArgument, "iat: series needs at least " + std::to_string(kMinIatLength) + " values");
  }
  for (double v : series) {
    if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "iat: series contains non-finite values");
  }
  const std::vector<double> gamma = autocovariance(series);
  if (!(gamma[0] > 0.0)) fail(ErrorCode::InvalidArgument, "iat: series is constant");

  // Geyer's initial positive sequence with the monotone refinement:
  // Γ_m = γ(2m) + γ(2m+1) summed while positive and non-increasing.
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < gamma.size(); ++m) {
    double pair = gamma[2 * m] + gamma[2 * m + 1];
    if (!(pair > 0.0)) break;
    pair = std::min(pair, previous);
    previous = pair;
    sum += pair;
  }
  return std::max(1.0, -1.0 + 2.0 * sum / gamma[0]);
}

std::vector<double> qoi_series(const ChainSet& chains, int level) {
  require(level >= 0 && level < static_cast<int>(chains.levels.size()), "qoi_series: level out of range");
  const LevelChain& c = chains.levels[level];
  const std::size_t start = std::min(first_kept(chains.burn_in[level]), c.qoi.size());
  return {c.qoi.begin() + static_cast<std::ptrdiff_t>(start), c.qoi.end()};
}

std::vector<double> correction_series(const ChainSet& chains, int level) {
  std::vector<double> y = qoi_series(chains, level);
  if (level == 0) return y;
  const LevelChain& c = chains.levels[level];
  const std::size_t start = c.qoi.size() - y.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= c.qoi_coarse[start + i];
  return y;
}

double telescopic_estimate(const ChainSet& chains) {
  if (chains.levels.empty()) fail(ErrorCode::InvalidArgument, "telescopic_estimate: no levels");
  double total = 0.0;
  for (int l = 0; l < static_cast<int>(chains.levels.size()); ++l) {
    const std::vector<double> y = correction_series(chains, l);
    if (y.empty()) {
      fail(ErrorCode::InvalidArgument, "telescopic_estimate: level " + std::to_string(l) + " has no samples after burn-in");
    }
    total += sample_mean(y);
  }
  return total;
}

double telescopic_estimate(const ChainSet& chains, const QoiFunction& qoi_at) {
  if (chains.levels.empty()) fail(ErrorCode::InvalidArgument, "telescopic_estimate: no levels");
  double total = 0.0;
  for (int l = 0; l < static_cast<int>(chains.levels.size()); ++l) {
    const LevelChain& c = chains.levels[l];
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < c.stored_count(); ++k) {
      if (c.stored_step(k) <= chains.burn_in[l]) continue;
      double y = qoi_at(l, c.sample(k));
      if (l > 0) y -= qoi_at(l - 1, c.coarse_sample(k));
      sum += y;
      ++count;
    }
    if (count == 0) {
      fail(ErrorCode::InvalidArgument, "telescopic_estimate: level " + std::to_string(l) + " has no stored samples after burn-in");
    }
    total += sum / static_cast<double>(count);
  }
  return total;
}

std::vector<LevelStats> level_statistics(const ChainSet& chains, std::span<const LevelGrid> grids) {
  std::vector<LevelStats> out;
  for (int l = 0; l < static_cast<int>(chains.levels.size()); ++l) {
    const LevelChain& c = chains.levels[l];
    LevelStats s;
    s.level = l;
    if (static_cast<std::size_t>(l) < grids.size()) {
      s.kl_truncation = grids[l].kl_truncation;
      s.nx = grids[l].nx;
      s.ny = grids[l].ny;
    } else {
      s.kl_truncation = c.dimension;
    }
    const std::vector<double> q = qoi_series(chains, l);
    const std::vector<double> y = correction_series(chains, l);
    s.n_samples = static_cast<std::int64_t>(y.size());
    s.mean_Y = sample_mean(y);
    s.var_Y = sample_variance(y);
    s.mean_Q = sample_mean(q);
    s.var_Q = sample_variance(q);
    s.rejection_rate = c.rejection_rate();
    s.iat = kNaN;
    if (y.size() >= kMinIatLength && s.var_Y > 0.0) s.iat = integrated_autocorrelation_time(y);
    if (static_cast<std::size_t>(l) < chains.costs.size()) s.mean_sample_cost = chains.costs[l].mean();
    out.push_back(s);
  }
  return out;
}

double telescopic_standard_error(std::span<const LevelStats> stats) {
  double v = 0.0;
  for (const LevelStats& s : stats) {
    if (s.n_samples <= 0) continue;
    const double tau = std::isfinite(s.iat) ? s.iat : 1.0;
    v += s.var_Y * tau / static_cast<double>(s.n_samples);
  }
  return std::sqrt(v);
}

PooledEstimate pool_replicates(std::span<const double> estimates, std::span<const double> within_errors) {
  require(!estimates.empty(), "pool_replicates: no estimates");
  PooledEstimate p;
  p.replicates = estimates.size();
  p.value = sample_mean(estimates);
  if (estimates.size() >= 2) {
    p.standard_error = std::sqrt(sample_variance(estimates) / static_cast<double>(estimates.size()));
  } else if (!within_errors.empty()) {
    p.standard_error = within_errors[0];
  }
  return p;
}

}  // namespace mlmcmc
