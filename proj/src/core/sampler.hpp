#pragma once

#include "core/rng.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mlmcmc {

/// Unnormalised log-likelihood and quantity of interest of one parameter vector.
struct Evaluation {
  double log_likelihood = 0.0;
  double qoi = 0.0;
};

/// Likelihood evaluator for one level. Implementations may keep mutable
/// workspace, so each chain owns its own instance.
class LevelEvaluator {
 public:
  virtual ~LevelEvaluator() = default;
  virtual int dimension() const = 0;
  virtual Evaluation evaluate(std::span<const double> coefficients) = 0;
};

/// Adapts a callable; used for analytic and stub likelihoods.
class FunctionEvaluator final : public LevelEvaluator {
 public:
  using Fn = std::function<Evaluation(std::span<const double>)>;
  FunctionEvaluator(int dimension, Fn fn) : dimension_(dimension), fn_(std::move(fn)) {}
  int dimension() const override { return dimension_; }
  Evaluation evaluate(std::span<const double> c) override { return fn_(c); }

 private:
  int dimension_;
  Fn fn_;
};

struct ChainState {
  std::vector<double> coefficients;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  /// Level ℓ-1 log-likelihood of the first M_{ℓ-1} coefficients (levels ≥ 1).
  double log_likelihood_coarse = std::numeric_limits<double>::quiet_NaN();
  double qoi = std::numeric_limits<double>::quiet_NaN();
  std::int64_t iteration = 0;
};

struct StepResult {
  bool accepted = false;
  double log_alpha = 0.0;
  bool evaluation_failed = false;
};

/// θ' = θ sqrt(1 - β²) + β ζ, ζ ~ N(0, I).
std::vector<double> pcn_propose(std::span<const double> current, double beta, Rng& rng);
void pcn_propose_into(std::span<const double> current, double beta, Rng& rng, std::span<double> out);

/// Log of the multilevel acceptance ratio
///   L_ℓ(θ') L_{ℓ-1}(θ^{n,C}) / (L_ℓ(θ^n) L_{ℓ-1}((θ^C)')).
/// Proposals with L_ℓ(θ') = 0 give -inf; a current state with zero
/// likelihood gives +inf.
double ml_log_acceptance(double fine_proposal, double coarse_current, double fine_current, double coarse_proposal);

/// Evaluates, mapping solver and numerical failures to log-likelihood -inf.
Evaluation evaluate_or_reject(LevelEvaluator& evaluator, std::span<const double> coefficients, bool& failed);

/// Coarsest-level pCN Metropolis-Hastings step.
StepResult coarse_step(ChainState& state, LevelEvaluator& evaluator, double beta, Rng& rng);

/// Level ℓ ≥ 1 step: the coarse modes are replaced by `coarse_subsample`
/// (a level ℓ-1 chain state with its cached likelihood), the remaining modes
/// get a pCN move.
StepResult ml_step(ChainState& fine, const ChainState& coarse_subsample, double beta, LevelEvaluator& fine_evaluator,
                   Rng& rng);

struct SamplerLevel {
  int dimension = 0;          // M_ℓ
  int subsample_rate = 1;     // τ_ℓ, unused on level 0
  double beta = 0.2;
  std::int64_t burn_in = -1;  // B_ℓ; negative selects burn_in_fraction of the steps
  int store_stride = 1;       // keep every stride-th state's coefficients
};

struct SamplerSettings {
  std::vector<SamplerLevel> levels;
  std::int64_t coarse_chain_length = 0;  // level-0 iterations, burn-in included
  double burn_in_fraction = 0.1;

  void validate() const;
  /// Steps each level takes for the full coarse chain: s_0 = N_0,
  /// s_ℓ = floor(s_{ℓ-1} / τ_ℓ).
  std::vector<std::int64_t> expected_steps() const;
  std::vector<std::int64_t> burn_in() const;
};

/// Record of one level's chain. Per-step quantities are kept for every step;
/// coefficient vectors only every store_stride steps.
struct LevelChain {
  int level = 0;
  int dimension = 0;
  int coarse_dimension = 0;
  int store_stride = 1;
  std::int64_t steps = 0;
  std::int64_t accepted = 0;
  std::int64_t failures = 0;
  std::vector<double> qoi;             // Q_ℓ of the state after each step
  std::vector<double> qoi_coarse;      // Q_{ℓ-1} of the paired coarse subsample (ℓ ≥ 1)
  std::vector<double> samples;         // stored states, dimension values each
  std::vector<double> coarse_samples;  // paired coarse subsamples, coarse_dimension values each
  std::vector<double> sample_log_likelihood;

  std::size_t stored_count() const { return sample_log_likelihood.size(); }
  /// 1-based step index of stored sample k.
  std::int64_t stored_step(std::size_t k) const { return static_cast<std::int64_t>(k + 1) * store_stride; }
  std::span<const double> sample(std::size_t k) const {
    return {samples.data() + k * dimension, static_cast<std::size_t>(dimension)};
  }
  std::span<const double> coarse_sample(std::size_t k) const {
    return {coarse_samples.data() + k * coarse_dimension, static_cast<std::size_t>(coarse_dimension)};
  }
  double rejection_rate() const { return steps > 0 ? 1.0 - static_cast<double>(accepted) / steps : 0.0; }
};

/// Wall-clock timing; never part of determinism comparisons.
struct LevelCost {
  double seconds = 0.0;
  std::int64_t steps = 0;
  double mean() const { return steps > 0 ? seconds / steps : 0.0; }
};

struct ChainSet {
  std::vector<LevelChain> levels;
  std::vector<std::int64_t> burn_in;
  std::vector<LevelCost> costs;

  int finest_level() const { return static_cast<int>(levels.size()) - 1; }
};

/// Bit-for-bit comparison of the chain records (costs excluded).
bool bitwise_equal(const ChainSet& a, const ChainSet& b);
bool bitwise_equal(const ChainState& a, const ChainState& b);

/// Complete resumable sampler state.
struct SamplerSnapshot {
  std::vector<ChainState> states;
  std::vector<std::string> rng_states;
  std::int64_t coarse_iterations = 0;
  bool initialised = false;
  ChainSet chains;
};

/// Multilevel MCMC over a hierarchy of evaluators. Level 0 advances every
/// iteration; level ℓ steps whenever level ℓ-1 has just stepped and its step
/// count is a multiple of τ_ℓ, taking the current level ℓ-1 state as coarse
/// proposal. All chains start at the zero vector.
class HierarchySampler {
 public:
  HierarchySampler(std::vector<LevelEvaluator*> evaluators, SamplerSettings settings, std::uint64_t root_seed,
                   std::uint64_t replicate);

  /// Runs at most max_iterations further level-0 iterations (all remaining
  /// when negative). Returns true when the chain is complete.
  bool advance(std::int64_t max_iterations = -1);

  bool finished() const { return coarse_iterations_ >= settings_.coarse_chain_length; }
  std::int64_t coarse_iterations() const { return coarse_iterations_; }
  const ChainSet& chains() const { return chains_; }
  const std::vector<ChainState>& states() const { return states_; }
  const SamplerSettings& settings() const { return settings_; }

  SamplerSnapshot snapshot() const;
  void restore(const SamplerSnapshot& snapshot);

 private:
  void initialise();
  void record(int level, const ChainState* coarse);

  std::vector<LevelEvaluator*> evaluators_;
  SamplerSettings settings_;
  std::vector<Rng> rngs_;
  std::vector<ChainState> states_;
  ChainSet chains_;
  std::int64_t coarse_iterations_ = 0;
  bool initialised_ = false;
};

/// Runs a full hierarchy from scratch.
ChainSet run_hierarchy(std::vector<LevelEvaluator*> evaluators, const SamplerSettings& settings,
                       std::uint64_t root_seed, std::uint64_t replicate = 0);

}  // namespace mlmcmc
