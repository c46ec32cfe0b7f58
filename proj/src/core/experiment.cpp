#include "core/experiment.hpp"

#include "core/error.hpp"
#include "core/estimator.hpp"
#include "core/persistence.hpp"
#include "core/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mlmcmc {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void log_line(const RunOptions& o, const std::string& message) {
  if (o.log) o.log(message);
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// One hierarchy configuration run over its replicates. `dir` is relative to
// the output directory ("" for the directory itself).
struct Variant {
  std::string dir;
  HierarchyConfig config;
};

std::vector<Variant> variants_of(const HierarchyConfig& c) {
  std::vector<Variant> out;
  if (c.experiment == ExperimentType::EigenDecay) return out;
  if (c.experiment == ExperimentType::RejectionRate) {
    for (double nu : c.effective_smoothness_sweep()) {
      HierarchyConfig v = c;
      v.matern.smoothness = nu;
      out.push_back({"nu_" + short_num(nu), v});
    }
    return out;
  }
  out.push_back({"", c});
  if (c.experiment == ExperimentType::CostVariance && c.compare_independent &&
      c.treatment == DataTreatment::LevelDependent) {
    HierarchyConfig v = c;
    v.treatment = DataTreatment::LevelIndependent;
    v.replicates = 1;
    v.coarse_chain_length =
        std::max<std::int64_t>(1, std::llround(static_cast<double>(c.coarse_chain_length) * c.independent_chain_fraction));
    for (LevelConfig& l : v.levels) l.burn_in = -1;
    out.push_back({"level_independent", v});
  }
  return out;
}

fs::path replicate_dir(const fs::path& out, const Variant& v, int replicate) {
  return out / v.dir / ("replicate_" + std::to_string(replicate));
}

void run_parallel(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers))));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Replicate tasks

Json timings_to_json(const std::vector<EvaluationTimings>& t) {
  Json out = Json::array();
  for (const EvaluationTimings& x : t) {
    out.push_back({{"field_seconds", x.field_seconds},
                   {"solve_seconds", x.solve_seconds},
                   {"likelihood_seconds", x.likelihood_seconds},
                   {"evaluations", x.evaluations}});
  }
  return out;
}

std::vector<EvaluationTimings> current_timings(const std::vector<std::unique_ptr<LevelEvaluator>>& evaluators,
                                               const std::vector<EvaluationTimings>& offset) {
  std::vector<EvaluationTimings> out(evaluators.size());
  for (std::size_t l = 0; l < evaluators.size(); ++l) {
    if (l < offset.size()) out[l] = offset[l];
    if (const auto* beam = dynamic_cast<const BeamLevelEvaluator*>(evaluators[l].get())) {
      const EvaluationTimings& t = beam->timings();
      out[l].field_seconds += t.field_seconds;
      out[l].solve_seconds += t.solve_seconds;
      out[l].likelihood_seconds += t.likelihood_seconds;
      out[l].evaluations += t.evaluations;
    }
  }
  return out;
}

void write_checkpoint(const fs::path& path, const HierarchySampler& sampler, int replicate,
                      const std::vector<EvaluationTimings>& timings) {
  Json j = snapshot_to_json(sampler.snapshot());
  j["replicate"] = replicate;
  j["timings"] = timings_to_json(timings);
  write_cbor(path, j);
}

// Returns true when the replicate's chains are complete.
bool run_task(const ProblemSetup& setup, int replicate, const fs::path& dir, std::int64_t halt_after,
              const RunOptions& options, const std::string& label) {
  const fs::path chains_path = dir / "chains.cbor";
  const fs::path checkpoint_path = dir / "checkpoint.cbor";
  if (fs::exists(chains_path)) return true;
  fs::create_directories(dir);

  const HierarchyConfig& c = setup.config;
  std::vector<std::unique_ptr<LevelEvaluator>> evaluators = make_evaluators(setup);
  std::vector<LevelEvaluator*> ptrs;
  for (auto& e : evaluators) ptrs.push_back(e.get());
  HierarchySampler sampler(ptrs, c.sampler_settings(), c.root_seed, static_cast<std::uint64_t>(replicate));

  std::vector<EvaluationTimings> offset;
  if (fs::exists(checkpoint_path)) {
    const Json j = read_cbor(checkpoint_path);
    if (j.value("replicate", -1) != replicate) fail(ErrorCode::Io, "checkpoint belongs to another replicate: " + checkpoint_path.string());
    sampler.restore(snapshot_from_json(j));
    for (const Json& t : j.value("timings", Json::array())) {
      offset.push_back({t.value("field_seconds", 0.0), t.value("solve_seconds", 0.0), t.value("likelihood_seconds", 0.0),
                        t.value("evaluations", std::int64_t{0})});
    }
    log_line(options, label + ": resumed at iteration " + std::to_string(sampler.coarse_iterations()));
  }

  const std::int64_t total = c.coarse_chain_length;
  while (!sampler.finished()) {
    std::int64_t target = total;
    if (c.checkpoint_every > 0) target = std::min(target, (sampler.coarse_iterations() / c.checkpoint_every + 1) * c.checkpoint_every);
    if (halt_after >= 0) target = std::min(target, halt_after);
    if (target <= sampler.coarse_iterations()) {
      write_checkpoint(checkpoint_path, sampler, replicate, current_timings(evaluators, offset));
      log_line(options, label + ": halted at iteration " + std::to_string(sampler.coarse_iterations()));
      return false;
    }
    sampler.advance(target - sampler.coarse_iterations());
    if (!sampler.finished()) write_checkpoint(checkpoint_path, sampler, replicate, current_timings(evaluators, offset));
  }

  // Chain records exclude wall-clock data so that they are reproducible byte for byte.
  ChainSet record = sampler.chains();
  const std::vector<LevelCost> costs = record.costs;
  record.costs.clear();
  write_cbor(chains_path, chainset_to_json(record));

  const std::vector<EvaluationTimings> timings = current_timings(evaluators, offset);
  Json levels = Json::array();
  for (std::size_t l = 0; l < costs.size(); ++l) {
    Json row = {{"level", l},
                {"seconds", costs[l].seconds},
                {"steps", costs[l].steps},
                {"mean_sample_cost", costs[l].mean()}};
    if (l < timings.size()) {
      row["field_seconds"] = timings[l].field_seconds;
      row["solve_seconds"] = timings[l].solve_seconds;
      row["likelihood_seconds"] = timings[l].likelihood_seconds;
      row["evaluations"] = timings[l].evaluations;
    }
    levels.push_back(row);
  }
  write_json(dir / "costs.json", {{"replicate", replicate}, {"levels", levels}});
  fs::remove(checkpoint_path);
  log_line(options, label + ": complete");
  return true;
}

ChainSet load_replicate_chains(const fs::path& dir) {
  const fs::path chains_path = dir / "chains.cbor";
  if (!fs::exists(chains_path)) {
    fail(ErrorCode::Io, "missing " + chains_path.string() + " (the run is incomplete; resume it first)");
  }
  ChainSet chains = chainset_from_json(read_cbor(chains_path));
  chains.costs.assign(chains.levels.size(), LevelCost{});
  const fs::path costs_path = dir / "costs.json";
  if (fs::exists(costs_path)) {
    const Json j = read_json(costs_path);
    for (const Json& row : j.value("levels", Json::array())) {
      const std::size_t l = row.value("level", std::size_t{0});
      if (l < chains.costs.size()) chains.costs[l] = {row.value("seconds", 0.0), row.value("steps", std::int64_t{0})};
    }
  }
  return chains;
}

// ---------------------------------------------------------------------------
// Cost probes

// Minimum over batches of the mean time per call; robust against scheduler noise.
template <class Fn>
double time_per_call(Fn&& fn, double batch_seconds = 0.005, int batches = 7) {
  fn();
  std::int64_t reps = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (std::int64_t i = 0; i < reps; ++i) fn();
    const double t = seconds_since(t0);
    if (t >= batch_seconds || reps >= (std::int64_t{1} << 30)) break;
    reps *= 2;
  }
  double best = std::numeric_limits<double>::infinity();
  for (int b = 0; b < batches; ++b) {
    const auto t0 = Clock::now();
    for (std::int64_t i = 0; i < reps; ++i) fn();
    best = std::min(best, seconds_since(t0) / static_cast<double>(reps));
  }
  return best;
}

double likelihood_cost(const std::shared_ptr<const BeamLevelModel>& model) {
  BeamLevelEvaluator ev(model);
  const std::vector<double> zero(static_cast<std::size_t>(model->dimension()), 0.0);
  ev.evaluate(zero);
  const std::vector<double> disp = ev.last_displacement();
  std::vector<double> model_obs, scratch;
  volatile double sink = 0.0;
  const double t = time_per_call([&] { sink = sink + model->log_likelihood_of(disp, model_obs, scratch); });
  (void)sink;
  return t;
}

Json probe_costs(const ProblemSetup& dependent, const ProblemSetup* independent, const RunOptions& options) {
  const HierarchyConfig& c = dependent.config;
  Json levels = Json::array();
  for (std::size_t l = 0; l < dependent.models.size(); ++l) {
    Json row = {{"level", l},
                {"observation_count", dependent.models[l]->observation_count()},
                {"likelihood_cost", likelihood_cost(dependent.models[l])}};
    if (independent) {
      row["observation_count_independent"] = independent->models[l]->observation_count();
      row["likelihood_cost_independent"] = likelihood_cost(independent->models[l]);
    }
    levels.push_back(row);
  }
  // Single-level reference: a finest-level sample costs one finest evaluation.
  BeamLevelEvaluator ev(dependent.models.back());
  Rng rng(c.root_seed, 0, StreamTag::Test, 1);
  std::vector<double> xi(static_cast<std::size_t>(ev.dimension()));
  for (double& v : xi) v = rng.normal();
  ev.evaluate(xi);
  double total = 0.0;
  for (int k = 0; k < c.single_level_probe; ++k) {
    for (double& v : xi) v = rng.normal();
    const auto t0 = Clock::now();
    ev.evaluate(xi);
    total += seconds_since(t0);
  }
  log_line(options, "cost probes complete");
  return {{"levels", levels}, {"single_level_cost", total / c.single_level_probe}};
}

// ---------------------------------------------------------------------------
// Reports

Json stats_to_json(const LevelStats& s) {
  return {{"level", s.level},       {"kl_truncation", s.kl_truncation},
          {"nx", s.nx},             {"ny", s.ny},
          {"n_samples", s.n_samples}, {"mean_Y", finite_or_null(s.mean_Y)},
          {"var_Y", finite_or_null(s.var_Y)}, {"mean_Q", finite_or_null(s.mean_Q)},
          {"var_Q", finite_or_null(s.var_Q)}, {"rejection_rate", s.rejection_rate},
          {"iat", finite_or_null(s.iat)}, {"mean_sample_cost", s.mean_sample_cost}};
}

void write_level_stats_csv(const fs::path& path, const std::vector<LevelStats>& stats) {
  std::ostringstream os;
  os << "level,kl_truncation,nx,ny,n_samples,mean_Y,var_Y,mean_Q,var_Q,rejection_rate,iat,mean_sample_cost\n";
  for (const LevelStats& s : stats) {
    os << s.level << ',' << s.kl_truncation << ',' << s.nx << ',' << s.ny << ',' << s.n_samples << ',' << num(s.mean_Y)
       << ',' << num(s.var_Y) << ',' << num(s.mean_Q) << ',' << num(s.var_Q) << ',' << num(s.rejection_rate) << ','
       << num(s.iat) << ',' << num(s.mean_sample_cost) << '\n';
  }
  write_text(path, os.str());
}

// Level-wise average of replicate statistics; sample counts are summed.
std::vector<LevelStats> pool_level_stats(const std::vector<std::vector<LevelStats>>& per_replicate) {
  std::vector<LevelStats> out = per_replicate.front();
  const std::size_t levels = out.size();
  for (std::size_t l = 0; l < levels; ++l) {
    LevelStats& p = out[l];
    p.n_samples = 0;
    p.mean_Y = p.var_Y = p.mean_Q = p.var_Q = p.rejection_rate = p.mean_sample_cost = 0.0;
    double iat_sum = 0.0;
    int iat_count = 0;
    for (const auto& rep : per_replicate) {
      const LevelStats& s = rep[l];
      p.n_samples += s.n_samples;
      p.mean_Y += s.mean_Y;
      p.var_Y += s.var_Y;
      p.mean_Q += s.mean_Q;
      p.var_Q += s.var_Q;
      p.rejection_rate += s.rejection_rate;
      p.mean_sample_cost += s.mean_sample_cost;
      if (std::isfinite(s.iat)) {
        iat_sum += s.iat;
        ++iat_count;
      }
    }
    const double r = static_cast<double>(per_replicate.size());
    p.mean_Y /= r;
    p.var_Y /= r;
    p.mean_Q /= r;
    p.var_Q /= r;
    p.rejection_rate /= r;
    p.mean_sample_cost /= r;
    p.iat = iat_count > 0 ? iat_sum / iat_count : kNaN;
  }
  return out;
}

struct VariantReport {
  std::vector<std::vector<LevelStats>> replicate_stats;
  std::vector<std::vector<std::int64_t>> replicate_steps;
  std::vector<LevelStats> pooled;
  PooledEstimate estimate;
  Json json;
};

VariantReport report_variant(const fs::path& out, const Variant& v,
                             const std::function<void(int, const ChainSet&)>& visit = {}) {
  VariantReport r;
  const std::vector<LevelGrid> grids = v.config.level_grids();
  std::vector<double> estimates, errors;
  Json replicates = Json::array();
  for (int rep = 0; rep < v.config.replicates; ++rep) {
    const fs::path dir = replicate_dir(out, v, rep);
    const ChainSet chains = load_replicate_chains(dir);
    std::vector<LevelStats> stats = level_statistics(chains, grids);
    const double estimate = telescopic_estimate(chains);
    const double se = telescopic_standard_error(stats);
    write_level_stats_csv(dir / "level_stats.csv", stats);
    write_json(dir / "estimate.json", {{"value", estimate}, {"standard_error", se}, {"replicates", 1}});
    std::vector<std::int64_t> steps;
    for (const LevelChain& c : chains.levels) steps.push_back(c.steps);
    r.replicate_steps.push_back(steps);
    r.replicate_stats.push_back(std::move(stats));
    estimates.push_back(estimate);
    errors.push_back(se);
    replicates.push_back({{"replicate", rep}, {"value", estimate}, {"standard_error", se}});
    if (visit) visit(rep, chains);
  }
  r.pooled = pool_level_stats(r.replicate_stats);
  r.estimate = pool_replicates(estimates, errors);
  write_level_stats_csv(out / v.dir / "level_stats.csv", r.pooled);
  const Json estimate = {{"value", r.estimate.value},
                         {"standard_error", r.estimate.standard_error},
                         {"replicates", r.estimate.replicates},
                         {"per_replicate", replicates}};
  write_json(out / v.dir / "estimate.json", estimate);
  Json levels = Json::array();
  for (const LevelStats& s : r.pooled) levels.push_back(stats_to_json(s));
  r.json = {{"dir", v.dir.empty() ? "." : v.dir},
            {"smoothness", v.config.matern.smoothness},
            {"treatment", to_string(v.config.treatment)},
            {"estimate", estimate},
            {"levels", levels}};
  return r;
}

Json write_rejection_rates(const fs::path& out, const std::vector<Variant>& variants,
                           const std::vector<VariantReport>& reports) {
  std::ostringstream os;
  os << "nu,level,rejection_rate,ci_low,ci_high\n";
  Json rows = Json::array();
  for (std::size_t k = 0; k < variants.size(); ++k) {
    const VariantReport& r = reports[k];
    const std::size_t reps = r.replicate_stats.size();
    for (std::size_t l = 0; l < r.pooled.size(); ++l) {
      std::vector<double> rates;
      for (const auto& s : r.replicate_stats) rates.push_back(s[l].rejection_rate);
      const double mean = sample_mean(rates);
      double half;
      if (reps >= 2) {
        const boost::math::students_t dist(static_cast<double>(reps - 1));
        half = boost::math::quantile(boost::math::complement(dist, 0.025)) *
               std::sqrt(sample_variance(rates) / static_cast<double>(reps));
      } else {
        const double n = static_cast<double>(std::max<std::int64_t>(1, r.replicate_steps[0][l]));
        half = 1.959963984540054 * std::sqrt(mean * (1.0 - mean) / n);
      }
      const double lo = std::clamp(mean - half, 0.0, 1.0), hi = std::clamp(mean + half, 0.0, 1.0);
      os << short_num(variants[k].config.matern.smoothness) << ',' << l << ',' << num(mean) << ',' << num(lo) << ','
         << num(hi) << '\n';
      rows.push_back({{"nu", variants[k].config.matern.smoothness},
                      {"level", l},
                      {"rejection_rate", mean},
                      {"ci_low", lo},
                      {"ci_high", hi}});
    }
  }
  write_text(out / "rejection_rate.csv", os.str());
  return rows;
}

Json write_cost_outputs(const fs::path& out, const HierarchyConfig& c, const VariantReport& dependent,
                        const VariantReport* independent) {
  const fs::path probe_path = out / "cost_probe.json";
  const Json probe = fs::exists(probe_path) ? read_json(probe_path) : Json::object();
  const Json probe_levels = probe.value("levels", Json::array());
  const double single = probe.contains("single_level_cost") ? number_or_nan(probe["single_level_cost"]) : kNaN;

  std::ostringstream os;
  os << "level,kl_truncation,nx,ny,dof,observation_count,observation_count_independent,cost_dependent,"
        "cost_independent,cost_single_level,likelihood_cost,likelihood_cost_independent\n";
  std::vector<double> dofs, costs, lik, nobs;
  Json rows = Json::array();
  for (std::size_t l = 0; l < c.levels.size(); ++l) {
    const LevelConfig& lc = c.levels[l];
    const double dof = 2.0 * (lc.nx + 1) * (lc.ny + 1);
    const double cost_dep = dependent.pooled[l].mean_sample_cost;
    const double cost_ind = independent ? independent->pooled[l].mean_sample_cost : kNaN;
    const Json p = l < probe_levels.size() ? probe_levels[l] : Json::object();
    const double n_dep = p.contains("observation_count") ? number_or_nan(p["observation_count"]) : kNaN;
    const double n_ind = p.contains("observation_count_independent") ? number_or_nan(p["observation_count_independent"]) : kNaN;
    const double lik_dep = p.contains("likelihood_cost") ? number_or_nan(p["likelihood_cost"]) : kNaN;
    const double lik_ind = p.contains("likelihood_cost_independent") ? number_or_nan(p["likelihood_cost_independent"]) : kNaN;
    os << l << ',' << lc.kl_truncation << ',' << lc.nx << ',' << lc.ny << ',' << num(dof) << ',' << num(n_dep) << ','
       << num(n_ind) << ',' << num(cost_dep) << ',' << num(cost_ind) << ',' << num(single) << ',' << num(lik_dep) << ','
       << num(lik_ind) << '\n';
    rows.push_back({{"level", l},
                    {"cost_dependent", finite_or_null(cost_dep)},
                    {"cost_independent", finite_or_null(cost_ind)},
                    {"likelihood_cost", finite_or_null(lik_dep)},
                    {"observation_count", finite_or_null(n_dep)}});
    dofs.push_back(dof);
    costs.push_back(cost_dep);
    lik.push_back(lik_dep);
    nobs.push_back(n_dep);
  }
  write_text(out / "cost_per_sample.csv", os.str());

  Json summary = {{"levels", rows}, {"single_level_cost", finite_or_null(single)}};
  if (!costs.empty() && costs[0] > 0.0 && independent) {
    summary["level0_cost_ratio"] = finite_or_null(independent->pooled[0].mean_sample_cost / costs[0]);
  }
  Json linearity = Json::array();
  for (std::size_t l = 0; l < lik.size(); ++l) linearity.push_back(finite_or_null((lik[l] / lik[0]) / (nobs[l] / nobs[0])));
  summary["likelihood_cost_linearity"] = linearity;
  bool positive = costs.size() >= 2;
  for (double v : costs) positive = positive && v > 0.0;
  if (positive) {
    std::vector<double> lx, ly;
    for (std::size_t l = 0; l < costs.size(); ++l) {
      lx.push_back(std::log(dofs[l]));
      ly.push_back(std::log(costs[l]));
    }
    summary["cost_dof_exponent"] = fit_power_law(lx, ly).slope;
  }
  write_json(out / "cost_summary.json", summary);
  return summary;
}

Json eigen_fits_from_csv(const fs::path& out, const HierarchyConfig& c) {
  std::ifstream is(out / "eigen_decay.csv");
  if (!is) fail(ErrorCode::Io, "missing eigen_decay.csv in " + out.string());
  std::string line;
  std::getline(is, line);
  std::map<double, std::vector<double>> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string nu, m, lambda;
    std::getline(ss, nu, ',');
    std::getline(ss, m, ',');
    std::getline(ss, lambda, ',');
    values[std::stod(nu)].push_back(std::stod(lambda));
  }
  Json fits = Json::array();
  for (const auto& [nu, lambdas] : values) {
    const PowerLawFit fit = fit_eigen_decay(lambdas, c.fit_m_min, c.fit_m_max);
    fits.push_back({{"nu", nu},
                    {"slope", fit.slope},
                    {"intercept", fit.intercept},
                    {"reference_slope", -(2.0 * nu + 2.0) / 2.0},
                    {"m_min", c.fit_m_min},
                    {"m_max", c.fit_m_max}});
  }
  write_json(out / "eigen_decay_fit.json", fits);
  return fits;
}

void run_eigen_decay(const HierarchyConfig& c, const fs::path& out, const RunOptions& options) {
  std::ostringstream os;
  os << "nu,m,lambda_m\n";
  for (double nu : c.effective_smoothness_sweep()) {
    MaternParams p = c.matern;
    p.smoothness = nu;
    const auto t0 = Clock::now();
    const KLBasis basis = cached_kl_basis(p, c.n_quad, c.eigen_count, c.effective_kl_cache_dir());
    log_line(options, "eigenvalues for nu = " + short_num(nu) + " in " + short_num(seconds_since(t0)) + " s");
    for (std::size_t m = 0; m < basis.eigenvalues.size(); ++m) {
      os << short_num(nu) << ',' << m + 1 << ',' << num(basis.eigenvalues[m]) << '\n';
    }
  }
  write_text(out / "eigen_decay.csv", os.str());
}

RunSummary report_impl(const fs::path& out, const ProblemSetup* main_setup) {
  const HierarchyConfig c = load_config(out / "config.ini");
  Json summary = {{"status", "complete"},
                  {"experiment", to_string(c.experiment)},
                  {"name", c.name},
                  {"output_dir", out.string()},
                  {"root_seed", c.root_seed},
                  {"replicates", c.replicates}};

  if (c.experiment == ExperimentType::EigenDecay) {
    summary["eigen_decay"] = eigen_fits_from_csv(out, c);
  } else {
    const std::vector<Variant> variants = variants_of(c);
    std::vector<VariantReport> reports;
    Json variant_json = Json::array();

    // Reconstruction accumulates the finest-level field statistics while the
    // chains are streamed.
    std::optional<ProblemSetup> rebuilt;
    const ProblemSetup* setup = main_setup;
    if (c.experiment == ExperimentType::Reconstruction && setup == nullptr) {
      rebuilt = build_problem(c);
      setup = &*rebuilt;
    }
    std::vector<double> field_sum, field_sq;
    std::int64_t field_count = 0;
    Json gallery = Json::array();

    for (const Variant& v : variants) {
      std::function<void(int, const ChainSet&)> visit;
      if (c.experiment == ExperimentType::Reconstruction && v.dir.empty()) {
        visit = [&](int rep, const ChainSet& chains) {
          const BeamLevelModel& finest = *setup->models.back();
          const int L = chains.finest_level();
          const LevelChain& chain = chains.levels[L];
          const std::size_t elements = static_cast<std::size_t>(finest.mesh().element_count());
          field_sum.resize(elements, 0.0);
          field_sq.resize(elements, 0.0);
          std::vector<std::size_t> kept;
          for (std::size_t k = 0; k < chain.stored_count(); ++k) {
            if (chain.stored_step(k) > chains.burn_in[L]) kept.push_back(k);
          }
          std::vector<double> a(elements);
          for (std::size_t k : kept) {
            finest.stiffness_into(chain.sample(k), a);
            for (std::size_t e = 0; e < elements; ++e) {
              field_sum[e] += a[e];
              field_sq[e] += a[e] * a[e];
            }
            ++field_count;
          }
          if (rep == 0 && !kept.empty()) {
            const int n = std::min<int>(c.gallery_size, static_cast<int>(kept.size()));
            for (int g = 0; g < n; ++g) {
              const std::size_t k = kept[(kept.size() - 1) * (g + 1) / n];
              finest.stiffness_into(chain.sample(k), a);
              const std::string file = "sample_" + std::to_string(g) + ".csv";
              write_raster(out / file, finest.mesh(), a);
              gallery.push_back({{"sample", g},
                                 {"replicate", rep},
                                 {"step", chain.stored_step(k)},
                                 {"log_likelihood", finite_or_null(chain.sample_log_likelihood[k])},
                                 {"file", file}});
            }
          }
        };
      }
      reports.push_back(report_variant(out, v, visit));
      variant_json.push_back(reports.back().json);
    }
    summary["variants"] = variant_json;
    summary["estimate"] = reports.front().json["estimate"];

    if (c.experiment == ExperimentType::RejectionRate) {
      summary["rejection_rate"] = write_rejection_rates(out, variants, reports);
    }
    if (c.experiment == ExperimentType::CostVariance) {
      const VariantReport* independent = reports.size() > 1 ? &reports[1] : nullptr;
      summary["cost"] = write_cost_outputs(out, c, reports.front(), independent);
    }
    if (c.experiment == ExperimentType::Reconstruction) {
      const BeamLevelModel& finest = *setup->models.back();
      write_raster(out / "truth_field.csv", finest.mesh(), setup->truth_stiffness);
      if (field_count == 0) fail(ErrorCode::InvalidArgument, "reconstruction: no stored finest-level samples after burn-in");
      std::vector<double> mean(field_sum.size()), sd(field_sum.size());
      const double n = static_cast<double>(field_count);
      for (std::size_t e = 0; e < mean.size(); ++e) {
        mean[e] = field_sum[e] / n;
        sd[e] = field_count > 1 ? std::sqrt(std::max(0.0, (field_sq[e] - n * mean[e] * mean[e]) / (n - 1.0))) : 0.0;
      }
      write_raster(out / "posterior_mean_field.csv", finest.mesh(), mean);
      write_raster(out / "posterior_std_field.csv", finest.mesh(), sd);
      std::ostringstream os;
      os << "sample,replicate,step,log_likelihood,file\n";
      for (const Json& g : gallery) {
        os << g["sample"].get<int>() << ',' << g["replicate"].get<int>() << ',' << g["step"].get<std::int64_t>() << ','
           << num(number_or_nan(g["log_likelihood"])) << ',' << g["file"].get<std::string>() << '\n';
      }
      write_text(out / "gallery.csv", os.str());
      summary["reconstruction"] = {{"posterior_samples", field_count},
                                   {"gallery", gallery},
                                   {"truth_modes", setup->truth_coefficients.size()}};
    }
  }
  const std::string text = summary.dump(2);
  write_text(out / "summary.json", text + "\n");
  return {out, true, text};
}

RunSummary execute(const HierarchyConfig& c, const fs::path& out, const RunOptions& options) {
  const auto t0 = Clock::now();
  if (c.experiment == ExperimentType::EigenDecay) {
    run_eigen_decay(c, out, options);
    return report_impl(out, nullptr);
  }
  const std::vector<Variant> variants = variants_of(c);
  std::vector<ProblemSetup> setups;
  for (const Variant& v : variants) {
    const auto ts = Clock::now();
    setups.push_back(build_problem(v.config));
    const fs::path obs_path = out / v.dir / "observations.csv";
    if (!fs::exists(obs_path)) {
      fs::create_directories(obs_path.parent_path());
      write_observations(setups.back().observations, setups.back().models.back()->finest_mesh(), obs_path);
    }
    log_line(options, "set up " + (v.dir.empty() ? std::string("hierarchy") : v.dir) + " in " +
                          short_num(seconds_since(ts)) + " s");
  }

  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t k = 0; k < variants.size(); ++k) {
    for (int r = 0; r < variants[k].config.replicates; ++r) tasks.emplace_back(k, r);
  }
  std::vector<char> complete(tasks.size(), 0);
  const int workers = effective_workers(c, options.workers);
  log_line(options, "running " + std::to_string(tasks.size()) + " chain hierarchies on " + std::to_string(workers) +
                        " worker(s)");
  run_parallel(tasks.size(), workers, [&](std::size_t i) {
    const auto [k, r] = tasks[i];
    const std::string label = (variants[k].dir.empty() ? std::string() : variants[k].dir + "/") + "replicate_" + std::to_string(r);
    complete[i] = run_task(setups[k], r, replicate_dir(out, variants[k], r), options.halt_after, options, label);
  });

  if (!std::all_of(complete.begin(), complete.end(), [](char x) { return x != 0; })) {
    Json summary = {{"status", "halted"},
                    {"experiment", to_string(c.experiment)},
                    {"name", c.name},
                    {"output_dir", out.string()},
                    {"halt_after", options.halt_after}};
    const std::string text = summary.dump(2);
    write_text(out / "summary.json", text + "\n");
    return {out, false, text};
  }

  if (c.experiment == ExperimentType::CostVariance && c.likelihood == LikelihoodModel::Beam &&
      !fs::exists(out / "cost_probe.json")) {
    const ProblemSetup* independent = setups.size() > 1 ? &setups[1] : nullptr;
    write_json(out / "cost_probe.json", probe_costs(setups.front(), independent, options));
  }
  RunSummary summary = report_impl(out, &setups.front());
  log_line(options, "finished in " + short_num(seconds_since(t0)) + " s");
  return summary;
}

}  // namespace

// ---------------------------------------------------------------------------

int effective_workers(const HierarchyConfig& config, std::optional<int> override_workers) {
  if (override_workers && *override_workers > 0) return *override_workers;
  if (config.workers > 0) return config.workers;
  if (const char* env = std::getenv("MLMCMC_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ProblemSetup build_problem(const HierarchyConfig& config) {
  config.validate();
  ProblemSetup s;
  s.config = config;
  const int truth_modes = config.effective_truth_modes();
  const int modes = std::max(config.levels.back().kl_truncation, truth_modes);
  s.basis = std::make_shared<const KLBasis>(
      cached_kl_basis(config.matern, config.n_quad, modes, config.effective_kl_cache_dir()));

  const LevelConfig& fine = config.levels.back();
  const Mesh finest = build_mesh(fine.nx, fine.ny, config.geometry);
  Rng truth_rng(config.root_seed, 0, StreamTag::Truth);
  s.truth_coefficients.resize(static_cast<std::size_t>(truth_modes));
  for (double& v : s.truth_coefficients) v = truth_rng.normal();
  const Eigen::MatrixXd phi = s.basis->scaled_modes_at(finest.unit_square_centroids(), truth_modes);
  Eigen::VectorXd g = phi * Eigen::Map<const Eigen::VectorXd>(s.truth_coefficients.data(), truth_modes);
  g.array() += s.basis->mean;
  s.truth_stiffness = transform_field(std::span<const double>(g.data(), static_cast<std::size_t>(g.size())), config.transform);

  s.observations = synthesize_observations(finest, StiffnessField{s.truth_stiffness}, config.geometry, config.fidelity,
                                           config.effective_data_seed());
  s.observations.truth_coefficients = s.truth_coefficients;
  s.models = build_level_models(*s.basis, config.level_specs(), config.geometry, config.transform, config.qoi_region,
                                s.observations);
  return s;
}

std::vector<std::unique_ptr<LevelEvaluator>> make_evaluators(const ProblemSetup& setup) {
  std::vector<std::unique_ptr<LevelEvaluator>> out;
  for (const auto& model : setup.models) {
    if (setup.config.likelihood == LikelihoodModel::Flat) {
      out.push_back(std::make_unique<FunctionEvaluator>(model->dimension(), [model](std::span<const double> c) {
        return Evaluation{0.0, model->qoi(c)};
      }));
    } else {
      out.push_back(std::make_unique<BeamLevelEvaluator>(model));
    }
  }
  return out;
}

PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_power_law: need at least two points");
  const double mx = sample_mean(x), my = sample_mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  require(sxx > 0.0, "fit_power_law: degenerate abscissae");
  PowerLawFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

PowerLawFit fit_eigen_decay(std::span<const double> eigenvalues, int m_min, int m_max) {
  require(m_min >= 1 && m_min < m_max && static_cast<std::size_t>(m_max) <= eigenvalues.size(),
          "fit_eigen_decay: invalid fit range");
  std::vector<double> x, y;
  for (int m = m_min; m <= m_max; ++m) {
    const double lambda = eigenvalues[static_cast<std::size_t>(m - 1)];
    if (!(lambda > 0.0)) fail(ErrorCode::Numerical, "fit_eigen_decay: non-positive eigenvalue at m = " + std::to_string(m));
    x.push_back(std::log(static_cast<double>(m)));
    y.push_back(std::log(lambda));
  }
  return fit_power_law(x, y);
}

void write_raster(const fs::path& path, const Mesh& mesh, std::span<const double> values) {
  require(values.size() == static_cast<std::size_t>(mesh.element_count()), "write_raster: size mismatch");
  std::ostringstream os;
  os << "i,j,value\n";
  for (int i = 0; i < mesh.nx; ++i) {
    for (int j = 0; j < mesh.ny; ++j) os << i << ',' << j << ',' << num(values[static_cast<std::size_t>(i * mesh.ny + j)]) << '\n';
  }
  write_text(path, os.str());
}

RunSummary run_experiment(HierarchyConfig config, const RunOptions& options) {
  if (options.replicates) config.replicates = *options.replicates;
  if (options.root_seed) config.root_seed = *options.root_seed;
  if (options.output_dir) config.output_dir = *options.output_dir;
  config.validate();
  const fs::path out = config.output_dir;
  if (fs::exists(out / "config.ini")) {
    fail(ErrorCode::Config, "output directory " + out.string() + " already holds a run; resume it or choose another output");
  }
  fs::create_directories(out);
  save_config(config, out / "config.ini");
  return execute(config, out, options);
}

RunSummary resume_experiment(const fs::path& path, const RunOptions& options) {
  fs::path root = fs::is_directory(path) ? path : path.parent_path();
  while (!root.empty() && !fs::exists(root / "config.ini")) {
    const fs::path parent = root.parent_path();
    if (parent == root) break;
    root = parent;
  }
  if (root.empty() || !fs::exists(root / "config.ini")) {
    fail(ErrorCode::Io, "no run configuration (config.ini) found for " + path.string());
  }
  HierarchyConfig config = load_config(root / "config.ini");
  RunOptions o = options;
  o.replicates.reset();
  o.root_seed.reset();
  o.output_dir.reset();
  return execute(config, root, o);
}

RunSummary report_experiment(const fs::path& output_dir) { return report_impl(output_dir, nullptr); }

}  // namespace mlmcmc
