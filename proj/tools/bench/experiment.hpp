#pragma once

#include <optional>
#include <string>

#include "bench/config.hpp"

namespace seqpen::bench {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumeric = 3 };

/// Directory a run writes to: `out_override`, else the config's `output`,
/// else runs/<config file stem>.
std::string resolve_output_dir(const ExperimentConfig& config, const std::string& config_path,
                               const std::optional<std::string>& out_override);

/// Runs one experiment and writes results.csv, trace.csv,
/// violations_hist.csv, timeline.csv and manifest.txt into `out_dir`.
/// Returns an ExitCode; diagnostics go to stderr.
int run_experiment(const ExperimentConfig& config, const std::string& out_dir);

/// Parses `config_path` and runs it; config errors give kExitConfig.
int run_config_file(const std::string& config_path, const std::optional<std::string>& out_override);

/// Dataset root: the config's data_dir, else $SEQPEN_DATA_DIR, else data/digits.
std::string resolve_data_dir(const ExperimentConfig& config);

}  // namespace seqpen::bench
