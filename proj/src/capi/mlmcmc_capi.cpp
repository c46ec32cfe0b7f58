#define MLMCMC_BUILDING_LIBRARY
#include "mlmcmc/mlmcmc.h"

#include "core/config.hpp"
#include "core/error.hpp"
#include "core/experiment.hpp"
#include "core/persistence.hpp"
#include "core/random_field.hpp"
#include "core/transform.hpp"

#include <cstring>
#include <exception>
#include <mutex>
#include <new>
#include <string>

struct mlmcmc_config {
  mlmcmc::HierarchyConfig config;
};

struct mlmcmc_result {
  mlmcmc::RunSummary summary;
  std::string output_dir;
};

namespace {

thread_local std::string g_last_error;

mlmcmc_status status_of(mlmcmc::ErrorCode code) {
  switch (code) {
    case mlmcmc::ErrorCode::InvalidArgument: return MLMCMC_ERR_INVALID_ARGUMENT;
    case mlmcmc::ErrorCode::Config: return MLMCMC_ERR_CONFIG;
    case mlmcmc::ErrorCode::Io: return MLMCMC_ERR_IO;
    case mlmcmc::ErrorCode::Solver: return MLMCMC_ERR_SOLVER;
    case mlmcmc::ErrorCode::Numerical: return MLMCMC_ERR_NUMERICAL;
  }
  return MLMCMC_ERR_INTERNAL;
}

mlmcmc_status set_error(mlmcmc_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs fn, translating exceptions into status codes and the thread-local message.
template <class Fn>
mlmcmc_status guarded(Fn&& fn) {
  try {
    fn();
    return MLMCMC_OK;
  } catch (const mlmcmc::Error& e) {
    return set_error(status_of(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(MLMCMC_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MLMCMC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MLMCMC_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MLMCMC_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mlmcmc::RunOptions to_options(const mlmcmc_run_options* o, std::mutex& log_mutex) {
  mlmcmc::RunOptions r;
  if (!o) return r;
  if (o->replicates > 0) r.replicates = o->replicates;
  if (o->override_seed) r.root_seed = o->root_seed;
  if (o->output_dir) r.output_dir = std::string(o->output_dir);
  if (o->workers > 0) r.workers = o->workers;
  r.halt_after = o->halt_after;
  if (o->log) {
    const mlmcmc_log_fn fn = o->log;
    void* user = o->log_user_data;
    r.log = [fn, user, &log_mutex](const std::string& message) {
      std::lock_guard lock(log_mutex);
      fn(message.c_str(), user);
    };
  }
  return r;
}

mlmcmc_result* make_result(mlmcmc::RunSummary summary) {
  auto* r = new mlmcmc_result{std::move(summary), {}};
  r->output_dir = r->summary.output_dir.string();
  return r;
}

}  // namespace

extern "C" {

const char* mlmcmc_version(void) { return "1.0.0"; }

const char* mlmcmc_last_error(void) { return g_last_error.c_str(); }

const char* mlmcmc_status_name(mlmcmc_status status) {
  switch (status) {
    case MLMCMC_OK: return "ok";
    case MLMCMC_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MLMCMC_ERR_CONFIG: return "config";
    case MLMCMC_ERR_IO: return "io";
    case MLMCMC_ERR_SOLVER: return "solver";
    case MLMCMC_ERR_NUMERICAL: return "numerical";
    case MLMCMC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void mlmcmc_run_options_init(mlmcmc_run_options* options) {
  if (!options) return;
  std::memset(options, 0, sizeof *options);
  options->halt_after = -1;
}

void mlmcmc_string_free(char* text) { std::free(text); }

mlmcmc_status mlmcmc_config_load(const char* path, mlmcmc_config** out) {
  if (!path || !out) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_config_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mlmcmc_config{mlmcmc::load_config(path)}; });
}

mlmcmc_status mlmcmc_config_parse(const char* text, mlmcmc_config** out) {
  if (!text || !out) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_config_parse: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mlmcmc_config{mlmcmc::parse_config(text)}; });
}

void mlmcmc_config_free(mlmcmc_config* config) { delete config; }

mlmcmc_status mlmcmc_config_serialize(const mlmcmc_config* config, char** out_text) {
  if (!config || !out_text) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_config_serialize: null argument");
  *out_text = nullptr;
  return guarded([&] { *out_text = copy_string(mlmcmc::serialize_config(config->config)); });
}

mlmcmc_status mlmcmc_config_describe(const mlmcmc_config* config, char** out_json) {
  if (!config || !out_json) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_config_describe: null argument");
  *out_json = nullptr;
  return guarded([&] {
    const mlmcmc::HierarchyConfig& c = config->config;
    mlmcmc::Json levels = mlmcmc::Json::array();
    const mlmcmc::SamplerSettings settings = c.sampler_settings();
    const auto steps = settings.expected_steps();
    const auto burn = settings.burn_in();
    for (std::size_t l = 0; l < c.levels.size(); ++l) {
      const mlmcmc::LevelConfig& lc = c.levels[l];
      levels.push_back({{"level", l},
                        {"kl_truncation", lc.kl_truncation},
                        {"nx", lc.nx},
                        {"ny", lc.ny},
                        {"subsample_rate", l == 0 ? 1 : lc.subsample_rate},
                        {"pcn_beta", lc.pcn_beta},
                        {"fidelity", lc.fidelity},
                        {"steps", steps[l]},
                        {"burn_in", burn[l]}});
    }
    const mlmcmc::Json j = {{"valid", true},
                            {"experiment", mlmcmc::to_string(c.experiment)},
                            {"name", c.name},
                            {"replicates", c.replicates},
                            {"root_seed", c.root_seed},
                            {"output_dir", c.output_dir},
                            {"workers", mlmcmc::effective_workers(c)},
                            {"likelihood", mlmcmc::to_string(c.likelihood)},
                            {"treatment", mlmcmc::to_string(c.treatment)},
                            {"weighting", mlmcmc::to_string(c.weighting)},
                            {"levels", levels}};
    *out_json = copy_string(j.dump(2));
  });
}

mlmcmc_status mlmcmc_run(const mlmcmc_config* config, const mlmcmc_run_options* options, mlmcmc_result** out) {
  if (!config || !out) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_run: null argument");
  *out = nullptr;
  std::mutex log_mutex;
  return guarded([&] { *out = make_result(mlmcmc::run_experiment(config->config, to_options(options, log_mutex))); });
}

mlmcmc_status mlmcmc_resume(const char* path, const mlmcmc_run_options* options, mlmcmc_result** out) {
  if (!path || !out) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_resume: null argument");
  *out = nullptr;
  std::mutex log_mutex;
  return guarded([&] { *out = make_result(mlmcmc::resume_experiment(path, to_options(options, log_mutex))); });
}

mlmcmc_status mlmcmc_report(const char* output_dir, mlmcmc_result** out) {
  if (!output_dir || !out) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_report: null argument");
  *out = nullptr;
  return guarded([&] { *out = make_result(mlmcmc::report_experiment(output_dir)); });
}

int mlmcmc_result_complete(const mlmcmc_result* result) { return result && result->summary.complete ? 1 : 0; }

const char* mlmcmc_result_output_dir(const mlmcmc_result* result) { return result ? result->output_dir.c_str() : ""; }

const char* mlmcmc_result_summary_json(const mlmcmc_result* result) {
  return result ? result->summary.summary_json.c_str() : "";
}

void mlmcmc_result_free(mlmcmc_result* result) { delete result; }

mlmcmc_status mlmcmc_kl_eigenvalues(double variance, double corr_length, double smoothness, int n_quad, int count,
                                    double* out) {
  if (!out) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_kl_eigenvalues: null output");
  return guarded([&] {
    const mlmcmc::KLBasis basis = mlmcmc::build_kl_basis({variance, corr_length, smoothness}, n_quad, count);
    std::copy(basis.eigenvalues.begin(), basis.eigenvalues.end(), out);
  });
}

mlmcmc_status mlmcmc_gamma_transform(const double* g, size_t n, double scale, double shape, double floor_weight,
                                     double* out) {
  if ((!g || !out) && n > 0) return set_error(MLMCMC_ERR_INVALID_ARGUMENT, "mlmcmc_gamma_transform: null argument");
  return guarded([&] {
    const mlmcmc::GammaTransformParams p{scale, shape, floor_weight};
    p.validate();
    mlmcmc::transform_field_into({g, n}, p, {out, n});
  });
}

}  // extern "C"
