#include "core/sampler.hpp"

#include "core/error.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

namespace mlmcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool accept(double log_alpha, Rng& rng) {
  const double u = rng.uniform();
  if (log_alpha >= 0.0) return true;
  return std::log(u) < log_alpha;
}

}  // namespace

bool bitwise_equal(const ChainState& a, const ChainState& b) {
  return same_bits(a.coefficients, b.coefficients) && same_bits(a.log_likelihood, b.log_likelihood) &&
         same_bits(a.log_likelihood_coarse, b.log_likelihood_coarse) && same_bits(a.qoi, b.qoi) &&
         a.iteration == b.iteration;
}

bool bitwise_equal(const ChainSet& a, const ChainSet& b) {
  if (a.levels.size() != b.levels.size() || a.burn_in != b.burn_in) return false;
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    const LevelChain& x = a.levels[l];
    const LevelChain& y = b.levels[l];
    if (x.level != y.level || x.dimension != y.dimension || x.coarse_dimension != y.coarse_dimension ||
        x.store_stride != y.store_stride || x.steps != y.steps || x.accepted != y.accepted ||
        x.failures != y.failures) {
      return false;
    }
    if (!same_bits(x.qoi, y.qoi) || !same_bits(x.qoi_coarse, y.qoi_coarse) || !same_bits(x.samples, y.samples) ||
        !same_bits(x.coarse_samples, y.coarse_samples) ||
        !same_bits(x.sample_log_likelihood, y.sample_log_likelihood)) {
      return false;
    }
  }
  return true;
}

void pcn_propose_into(std::span<const double> current, double beta, Rng& rng, std::span<double> out) {
  require(beta >= 0.0 && beta <= 1.0, "pcn_propose: beta must lie in [0, 1]");
  require(out.size() == current.size(), "pcn_propose: output size mismatch");
  const double keep = std::sqrt(1.0 - beta * beta);
  for (std::size_t i = 0; i < current.size(); ++i) out[i] = keep * current[i] + beta * rng.normal();
}

std::vector<double> pcn_propose(std::span<const double> current, double beta, Rng& rng) {
  std::vector<double> out(current.size());
  pcn_propose_into(current, beta, rng, out);
  return out;
}

double ml_log_acceptance(double fine_proposal, double coarse_current, double fine_current, double coarse_proposal) {
  const double numerator = fine_proposal + coarse_current;
  const double denominator = fine_current + coarse_proposal;
  if (numerator == kNegInf || std::isnan(numerator)) return kNegInf;
  if (denominator == kNegInf) return std::numeric_limits<double>::infinity();
  return numerator - denominator;
}

Evaluation evaluate_or_reject(LevelEvaluator& evaluator, std::span<const double> coefficients, bool& failed) {
  failed = false;
  try {
    Evaluation e = evaluator.evaluate(coefficients);
    if (std::isnan(e.log_likelihood)) {
      failed = true;
      e.log_likelihood = kNegInf;
    }
    return e;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::Solver && err.code() != ErrorCode::Numerical) throw;
    failed = true;
    return {kNegInf, std::numeric_limits<double>::quiet_NaN()};
  }
}

StepResult coarse_step(ChainState& state, LevelEvaluator& evaluator, double beta, Rng& rng) {
  require(static_cast<int>(state.coefficients.size()) == evaluator.dimension(),
          "coarse_step: state dimension does not match the evaluator");
  std::vector<double> proposal = pcn_propose(state.coefficients, beta, rng);
  StepResult result;
  const Evaluation e = evaluate_or_reject(evaluator, proposal, result.evaluation_failed);
  if (e.log_likelihood == kNegInf) {
    result.log_alpha = kNegInf;
  } else if (state.log_likelihood == kNegInf) {
    result.log_alpha = std::numeric_limits<double>::infinity();
  } else {
    result.log_alpha = e.log_likelihood - state.log_likelihood;
  }
  result.accepted = accept(result.log_alpha, rng);
  if (result.accepted) {
    state.coefficients = std::move(proposal);
    state.log_likelihood = e.log_likelihood;
    state.qoi = e.qoi;
  }
  ++state.iteration;
  return result;
}

StepResult ml_step(ChainState& fine, const ChainState& coarse_subsample, double beta, LevelEvaluator& fine_evaluator,
                   Rng& rng) {
  const std::size_t m_fine = fine.coefficients.size();
  const std::size_t m_coarse = coarse_subsample.coefficients.size();
  if (static_cast<int>(m_fine) != fine_evaluator.dimension()) {
    fail(ErrorCode::InvalidArgument, "ml_step: fine state dimension does not match the evaluator");
  }
  if (m_coarse > m_fine) fail(ErrorCode::InvalidArgument, "ml_step: coarse proposal is longer than the fine state");

  std::vector<double> proposal(m_fine);
  std::copy(coarse_subsample.coefficients.begin(), coarse_subsample.coefficients.end(), proposal.begin());
  pcn_propose_into(std::span<const double>(fine.coefficients).subspan(m_coarse), beta, rng,
                   std::span<double>(proposal).subspan(m_coarse));

  StepResult result;
  const Evaluation e = evaluate_or_reject(fine_evaluator, proposal, result.evaluation_failed);
  result.log_alpha = ml_log_acceptance(e.log_likelihood, fine.log_likelihood_coarse, fine.log_likelihood,
                                       coarse_subsample.log_likelihood);
  result.accepted = accept(result.log_alpha, rng);
  if (result.accepted) {
    fine.coefficients = std::move(proposal);
    fine.log_likelihood = e.log_likelihood;
    fine.log_likelihood_coarse = coarse_subsample.log_likelihood;
    fine.qoi = e.qoi;
  }
  ++fine.iteration;
  return result;
}

void SamplerSettings::validate() const {
  if (levels.empty()) fail(ErrorCode::Config, "sampler needs at least one level");
  if (coarse_chain_length < 1) fail(ErrorCode::Config, "coarse chain length must be positive");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) fail(ErrorCode::Config, "burn-in fraction must lie in [0, 1)");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const SamplerLevel& lv = levels[l];
    if (lv.dimension < 1) fail(ErrorCode::Config, "level dimension must be positive");
    if (l > 0 && lv.dimension <= levels[l - 1].dimension) {
      fail(ErrorCode::Config, "KL truncation must be strictly increasing over levels");
    }
    if (l > 0 && lv.subsample_rate < 1) fail(ErrorCode::Config, "subsampling rate must be at least 1");
    if (!(lv.beta >= 0.0 && lv.beta <= 1.0)) fail(ErrorCode::Config, "pCN beta must lie in [0, 1]");
    if (lv.store_stride < 1) fail(ErrorCode::Config, "store stride must be at least 1");
  }
}

std::vector<std::int64_t> SamplerSettings::expected_steps() const {
  std::vector<std::int64_t> steps(levels.size(), 0);
  if (levels.empty()) return steps;
  steps[0] = coarse_chain_length;
  for (std::size_t l = 1; l < levels.size(); ++l) steps[l] = steps[l - 1] / levels[l].subsample_rate;
  return steps;
}

std::vector<std::int64_t> SamplerSettings::burn_in() const {
  const auto steps = expected_steps();
  std::vector<std::int64_t> out(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    out[l] = levels[l].burn_in >= 0 ? std::min(levels[l].burn_in, steps[l])
                                    : static_cast<std::int64_t>(std::floor(burn_in_fraction * steps[l]));
  }
  return out;
}

HierarchySampler::HierarchySampler(std::vector<LevelEvaluator*> evaluators, SamplerSettings settings,
                                   std::uint64_t root_seed, std::uint64_t replicate)
    : evaluators_(std::move(evaluators)), settings_(std::move(settings)) {
  settings_.validate();
  if (evaluators_.size() != settings_.levels.size()) {
    fail(ErrorCode::InvalidArgument, "sampler: one evaluator per level is required");
  }
  for (std::size_t l = 0; l < evaluators_.size(); ++l) {
    if (evaluators_[l] == nullptr || evaluators_[l]->dimension() != settings_.levels[l].dimension) {
      fail(ErrorCode::InvalidArgument, "sampler: evaluator dimension does not match level " + std::to_string(l));
    }
    rngs_.emplace_back(root_seed, replicate, StreamTag::Level, static_cast<std::uint32_t>(l));
  }

  const auto expected = settings_.expected_steps();
  chains_.burn_in = settings_.burn_in();
  chains_.costs.resize(settings_.levels.size());
  for (std::size_t l = 0; l < settings_.levels.size(); ++l) {
    LevelChain& c = chains_.levels.emplace_back();
    c.level = static_cast<int>(l);
    c.dimension = settings_.levels[l].dimension;
    c.coarse_dimension = l > 0 ? settings_.levels[l - 1].dimension : 0;
    c.store_stride = settings_.levels[l].store_stride;
    c.qoi.reserve(static_cast<std::size_t>(expected[l]));
    if (l > 0) c.qoi_coarse.reserve(static_cast<std::size_t>(expected[l]));
  }
}

void HierarchySampler::initialise() {
  states_.assign(settings_.levels.size(), ChainState{});
  for (std::size_t l = 0; l < states_.size(); ++l) {
    ChainState& s = states_[l];
    s.coefficients.assign(static_cast<std::size_t>(settings_.levels[l].dimension), 0.0);
    bool failed = false;
    const Evaluation e = evaluate_or_reject(*evaluators_[l], s.coefficients, failed);
    s.log_likelihood = e.log_likelihood;
    s.qoi = e.qoi;
    if (l > 0) s.log_likelihood_coarse = states_[l - 1].log_likelihood;
  }
  initialised_ = true;
}

void HierarchySampler::record(int level, const ChainState* coarse) {
  LevelChain& c = chains_.levels[level];
  const ChainState& s = states_[level];
  c.qoi.push_back(s.qoi);
  if (coarse != nullptr) c.qoi_coarse.push_back(coarse->qoi);
  if (c.steps % c.store_stride == 0) {
    c.samples.insert(c.samples.end(), s.coefficients.begin(), s.coefficients.end());
    if (coarse != nullptr) {
      c.coarse_samples.insert(c.coarse_samples.end(), coarse->coefficients.begin(), coarse->coefficients.end());
    }
    c.sample_log_likelihood.push_back(s.log_likelihood);
  }
}

bool HierarchySampler::advance(std::int64_t max_iterations) {
  if (!initialised_) initialise();
  using clock = std::chrono::steady_clock;
  const std::int64_t target =
      max_iterations < 0 ? settings_.coarse_chain_length
                         : std::min(settings_.coarse_chain_length, coarse_iterations_ + max_iterations);
  const int n_levels = static_cast<int>(settings_.levels.size());

  while (coarse_iterations_ < target) {
    auto t0 = clock::now();
    StepResult r = coarse_step(states_[0], *evaluators_[0], settings_.levels[0].beta, rngs_[0]);
    LevelChain& c0 = chains_.levels[0];
    ++c0.steps;
    c0.accepted += r.accepted ? 1 : 0;
    c0.failures += r.evaluation_failed ? 1 : 0;
    record(0, nullptr);
    auto t1 = clock::now();
    chains_.costs[0].seconds += std::chrono::duration<double>(t1 - t0).count();
    ++chains_.costs[0].steps;
    ++coarse_iterations_;

    for (int l = 1; l < n_levels; ++l) {
      if (chains_.levels[l - 1].steps % settings_.levels[l].subsample_rate != 0) break;
      t0 = clock::now();
      r = ml_step(states_[l], states_[l - 1], settings_.levels[l].beta, *evaluators_[l], rngs_[l]);
      LevelChain& c = chains_.levels[l];
      ++c.steps;
      c.accepted += r.accepted ? 1 : 0;
      c.failures += r.evaluation_failed ? 1 : 0;
      record(l, &states_[l - 1]);
      t1 = clock::now();
      chains_.costs[l].seconds += std::chrono::duration<double>(t1 - t0).count();
      ++chains_.costs[l].steps;
    }
  }
  return finished();
}

SamplerSnapshot HierarchySampler::snapshot() const {
  SamplerSnapshot s;
  s.states = states_;
  for (const Rng& r : rngs_) s.rng_states.push_back(r.serialize());
  s.coarse_iterations = coarse_iterations_;
  s.initialised = initialised_;
  s.chains = chains_;
  return s;
}

void HierarchySampler::restore(const SamplerSnapshot& snapshot) {
  if (snapshot.rng_states.size() != rngs_.size() || snapshot.chains.levels.size() != chains_.levels.size()) {
    fail(ErrorCode::InvalidArgument, "sampler snapshot does not match the hierarchy");
  }
  if (snapshot.initialised && snapshot.states.size() != rngs_.size()) {
    fail(ErrorCode::InvalidArgument, "sampler snapshot has the wrong number of chain states");
  }
  for (std::size_t l = 0; l < rngs_.size(); ++l) rngs_[l] = Rng::deserialize(snapshot.rng_states[l]);
  states_ = snapshot.states;
  coarse_iterations_ = snapshot.coarse_iterations;
  initialised_ = snapshot.initialised;
  chains_ = snapshot.chains;
}

ChainSet run_hierarchy(std::vector<LevelEvaluator*> evaluators, const SamplerSettings& settings,
                       std::uint64_t root_seed, std::uint64_t replicate) {
  HierarchySampler sampler(std::move(evaluators), settings, root_seed, replicate);
  sampler.advance();
  return sampler.chains();
}

}  // namespace mlmcmc
