/*
 * mlmcmc — multilevel MCMC for Young's-modulus inference in a clamped beam.
 *
 * C interface. All objects are opaque handles created and released by the
 * library. Every fallible function returns an mlmcmc_status; on failure a
 * message describing the error is available from mlmcmc_last_error() on the
 * same thread until the next failing call on that thread.
 */
#ifndef MLMCMC_MLMCMC_H
#define MLMCMC_MLMCMC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32) && defined(MLMCMC_BUILDING_LIBRARY)
#define MLMCMC_API __declspec(dllexport)
#elif defined(_WIN32)
#define MLMCMC_API __declspec(dllimport)
#elif defined(__GNUC__)
#define MLMCMC_API __attribute__((visibility("default")))
#else
#define MLMCMC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mlmcmc_status {
  MLMCMC_OK = 0,
  MLMCMC_ERR_INVALID_ARGUMENT = 1, /* bad argument or precondition */
  MLMCMC_ERR_CONFIG = 2,           /* configuration parse or validation failure */
  MLMCMC_ERR_IO = 3,               /* file missing, unreadable or malformed */
  MLMCMC_ERR_SOLVER = 4,           /* linear solver failure */
  MLMCMC_ERR_NUMERICAL = 5,        /* numerical failure (non-finite values, eigensolver) */
  MLMCMC_ERR_INTERNAL = 6          /* unexpected internal error */
} mlmcmc_status;

typedef struct mlmcmc_config mlmcmc_config;
typedef struct mlmcmc_result mlmcmc_result;

/* Progress messages. May be invoked from worker threads; calls are serialised. */
typedef void (*mlmcmc_log_fn)(const char* message, void* user_data);

typedef struct mlmcmc_run_options {
  int replicates;          /* > 0 overrides the configured replicate count */
  int override_seed;       /* non-zero: use root_seed below */
  uint64_t root_seed;
  const char* output_dir;  /* non-NULL overrides the configured output directory */
  int workers;             /* > 0 overrides the worker count */
  int64_t halt_after;      /* >= 0: stop each replicate after this many level-0 iterations */
  mlmcmc_log_fn log;       /* optional */
  void* log_user_data;
} mlmcmc_run_options;

/* Library version string, e.g. "1.0.0". */
MLMCMC_API const char* mlmcmc_version(void);
/* Message of the last failure on the calling thread ("" if none). */
MLMCMC_API const char* mlmcmc_last_error(void);
/* Stable lowercase name of a status code. */
MLMCMC_API const char* mlmcmc_status_name(mlmcmc_status status);
/* Fills options with defaults (no overrides, run to completion). */
MLMCMC_API void mlmcmc_run_options_init(mlmcmc_run_options* options);
/* Releases strings returned through char** out-parameters. */
MLMCMC_API void mlmcmc_string_free(char* text);

/* Configuration: parsed and validated on creation. */
MLMCMC_API mlmcmc_status mlmcmc_config_load(const char* path, mlmcmc_config** out);
MLMCMC_API mlmcmc_status mlmcmc_config_parse(const char* text, mlmcmc_config** out);
MLMCMC_API void mlmcmc_config_free(mlmcmc_config* config);
/* Canonical text form; parsing it yields an identical configuration. */
MLMCMC_API mlmcmc_status mlmcmc_config_serialize(const mlmcmc_config* config, char** out_text);
/* JSON description: experiment, levels, per-level step and burn-in counts. */
MLMCMC_API mlmcmc_status mlmcmc_config_describe(const mlmcmc_config* config, char** out_json);

/* Experiments. A result is returned both for complete and halted runs. */
MLMCMC_API mlmcmc_status mlmcmc_run(const mlmcmc_config* config, const mlmcmc_run_options* options,
                                    mlmcmc_result** out);
/* path: a run's output directory or a checkpoint file inside it. */
MLMCMC_API mlmcmc_status mlmcmc_resume(const char* path, const mlmcmc_run_options* options, mlmcmc_result** out);
/* Re-derives all aggregate outputs of a complete run from its stored chains. */
MLMCMC_API mlmcmc_status mlmcmc_report(const char* output_dir, mlmcmc_result** out);

MLMCMC_API int mlmcmc_result_complete(const mlmcmc_result* result);
MLMCMC_API const char* mlmcmc_result_output_dir(const mlmcmc_result* result);
/* Summary document (also written to <output_dir>/summary.json). */
MLMCMC_API const char* mlmcmc_result_summary_json(const mlmcmc_result* result);
MLMCMC_API void mlmcmc_result_free(mlmcmc_result* result);

/* Numerical building blocks. */

/* Leading `count` eigenvalues (descending) of the Matérn covariance operator
 * on the unit square, Nyström discretisation with n_quad^2 nodes. */
MLMCMC_API mlmcmc_status mlmcmc_kl_eigenvalues(double variance, double corr_length, double smoothness, int n_quad,
                                               int count, double* out);
/* Floored Gamma-approximation transform of n Gaussian values. */
MLMCMC_API mlmcmc_status mlmcmc_gamma_transform(const double* g, size_t n, double scale, double shape,
                                                double floor_weight, double* out);

#ifdef __cplusplus
}
#endif

#endif /* MLMCMC_MLMCMC_H */
