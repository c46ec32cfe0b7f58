// Command-line front end; uses only the public C interface.
#include "mlmcmc/mlmcmc.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

using Json = nlohmann::json;

int report_error(mlmcmc_status status) {
  const Json err = {{"error", {{"status", mlmcmc_status_name(status)}, {"code", static_cast<int>(status)},
                               {"message", mlmcmc_last_error()}}}};
  std::cerr << err.dump() << std::endl;
  return static_cast<int>(status);
}

void log_to_stderr(const char* message, void*) { std::cerr << "[mlmcmc] " << message << std::endl; }

int finish(mlmcmc_status status, mlmcmc_result* result) {
  if (status != MLMCMC_OK) return report_error(status);
  std::cout << mlmcmc_result_summary_json(result) << std::endl;
  mlmcmc_result_free(result);
  return 0;
}

struct CommonFlags {
  std::optional<int> workers;
  std::optional<std::int64_t> halt_after;
  bool quiet = false;
};

void fill(mlmcmc_run_options& o, const CommonFlags& f) {
  if (f.workers) o.workers = *f.workers;
  if (f.halt_after) o.halt_after = *f.halt_after;
  if (!f.quiet) o.log = log_to_stderr;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--workers", f.workers, "Concurrent replicates (default: config, MLMCMC_WORKERS, all cores)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--halt-after", f.halt_after, "Checkpoint and stop each replicate after N level-0 iterations")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--quiet", f.quiet, "Suppress progress messages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel MCMC experiments for Young's-modulus inference in a clamped beam"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mlmcmc_version()));

  std::string config_path, resume_path, validate_path, report_dir;
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  CommonFlags run_flags, resume_flags;

  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a configuration file");
  run->add_option("config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--replicates", replicates, "Override the replicate count")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Override the root seed");
  run->add_option("--output", output, "Override the output directory");
  add_common(run, run_flags);

  CLI::App* resume = app.add_subcommand("resume", "Continue a halted run from its checkpoints");
  resume->add_option("checkpoint", resume_path, "Run output directory or a checkpoint file inside it")
      ->required()
      ->check(CLI::ExistingPath);
  add_common(resume, resume_flags);

  CLI::App* validate = app.add_subcommand("validate", "Parse and validate a configuration file");
  validate->add_option("config", validate_path, "Configuration file")->required()->check(CLI::ExistingFile);

  CLI::App* report = app.add_subcommand("report", "Re-derive statistics from the stored chains of a run");
  report->add_option("output_dir", report_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*run) {
    mlmcmc_config* config = nullptr;
    if (const mlmcmc_status s = mlmcmc_config_load(config_path.c_str(), &config); s != MLMCMC_OK) return report_error(s);
    mlmcmc_run_options o;
    mlmcmc_run_options_init(&o);
    if (replicates) o.replicates = *replicates;
    if (seed) {
      o.override_seed = 1;
      o.root_seed = *seed;
    }
    if (output) o.output_dir = output->c_str();
    fill(o, run_flags);
    mlmcmc_result* result = nullptr;
    const mlmcmc_status s = mlmcmc_run(config, &o, &result);
    mlmcmc_config_free(config);
    return finish(s, result);
  }
  if (*resume) {
    mlmcmc_run_options o;
    mlmcmc_run_options_init(&o);
    fill(o, resume_flags);
    mlmcmc_result* result = nullptr;
    return finish(mlmcmc_resume(resume_path.c_str(), &o, &result), result);
  }
  if (*validate) {
    mlmcmc_config* config = nullptr;
    if (const mlmcmc_status s = mlmcmc_config_load(validate_path.c_str(), &config); s != MLMCMC_OK) return report_error(s);
    char* text = nullptr;
    const mlmcmc_status s = mlmcmc_config_describe(config, &text);
    mlmcmc_config_free(config);
    if (s != MLMCMC_OK) return report_error(s);
    std::cout << text << std::endl;
    mlmcmc_string_free(text);
    return 0;
  }
  if (*report) {
    mlmcmc_result* result = nullptr;
    return finish(mlmcmc_report(report_dir.c_str(), &result), result);
  }
  return 0;
}
