#pragma once

// Command-line front end: estimate, cv, simulate, evaluate and replay.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nucfactor/panel_io.hpp"

namespace nucfactor::cli {

struct RunConfig {
  std::string command;

  std::string data_path;
  CsvSchema schema;
  DesignSpec design;

  int dgp = 1;
  Index n = 50;
  Index t = 50;
  int reps = 1;
  double noise_variance = 4.0;
  std::string sweep;  // grid preset or list; empty = no sweep

  std::string family;  // empty = command default
  bool zero_alpha = false;
  std::optional<double> lambda_c;
  std::optional<double> delta;
  bool cv = false;
  int folds = 5;
  std::string grid = "simulation";
  Index burn_in = 2;
  Index kmax = 5;
  std::uint64_t seed = 0;
  std::string out = "nucfactor-out";
  double tol = 1e-5;
  int max_iter = 5000;
};

/// Parses argv (flags plus an optional --config key=value file; flags win).
/// Throws Error(ConfigError) on bad input.
RunConfig parse_args(const std::vector<std::string>& args);

/// Canonical argument list reproducing `config` (without --out).
std::vector<std::string> to_args(const RunConfig& config);

/// "simulation", "empirical" or a comma-separated list of values.
std::vector<double> parse_grid(const std::string& text);

/// Runs the command and writes artifacts plus manifest.json into config.out.
void run(const RunConfig& config);

/// Entry point: returns the process exit status (0 ok, 2 config, 3 data,
/// 4 numerical). Failures write error.json into --out when it is known.
int main_entry(int argc, const char* const* argv);

}  // namespace nucfactor::cli
