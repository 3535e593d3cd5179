#pragma once

#include <optional>
#include <string>
#include <vector>

#include "persist/linalg.hpp"

namespace persist {

// One run of the tool: a command, a model reference, and overrides. Values
// come from flags and/or a JSON config file; flags win. Unknown keys in
// either source are fatal, so a misspelled tolerance can never be silently
// ignored.
struct RunConfig {
  std::string command;
  std::string model;  // path or builtin:NAME
  std::optional<double> eta;
  std::optional<double> eps;
  std::optional<double> eps_range;
  std::optional<double> t_end;
  std::optional<double> horizon;
  std::optional<double> t_burn;
  std::optional<double> floor_horizon;
  std::optional<double> k0_radius;
  std::optional<double> rel_tol;
  std::optional<double> abs_tol;
  std::optional<int> nodes;
  std::optional<int> halton_count;
  std::optional<int> shells;
  std::optional<Vec> x0;
  std::optional<Vec> k0_center;
  std::string output_dir = "out";
  bool emit_plot_data = false;
  int threads = 0;  // 0: PERSIST_THREADS or hardware concurrency
};

// Thrown by load_config when --help is requested.
struct HelpRequested {
  std::string text;
};

// Merges a config file (when given) with command-line flags. Throws Error
// on malformed input, unknown keys, or a missing required field.
RunConfig load_config(const std::vector<std::string>& args);

// Executes the configured command, writing report.json (plus CSV and plot
// data) under output_dir. Returns the process exit code: 0 when
// certified/passed, 2 when refused/failed, 1 on operational errors.
int run(const RunConfig& cfg);

int cli_main(int argc, char** argv);

}  // namespace persist
