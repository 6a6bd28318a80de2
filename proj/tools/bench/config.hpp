#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "seqpen/inner_solver.hpp"
#include "seqpen/outer_driver.hpp"
#include "seqpen/penalty.hpp"

namespace seqpen::bench {

enum class Task { analytic_qp, enc_dec };
enum class Method { sequential, fixed, objective_only };
enum class Scale { desk, paper };
enum class Precision { float32, float64 };

/// Invalid configuration; `line` is 0 when the problem is not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string field, const std::string& message);
  int line() const { return line_; }
  const std::string& field() const { return field_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  std::string field_;
  std::string message_;
};

struct ExperimentConfig {
  Task task = Task::analytic_qp;
  Method method = Method::sequential;
  Scale scale = Scale::desk;
  Precision precision = Precision::float64;
  std::uint64_t seed = 0;
  std::string output;

  // Sequential penalty schedule.
  PenaltyKind penalty = PenaltyKind::quadratic;
  double tau0 = 1;
  double gamma = 2;
  double eps0 = 1;
  double eps_decay = 0.9;
  long max_outer = 20;
  long epochs_per_update = 1;
  double feasibility_tol = 1e-6;

  // Fixed-weight baseline.
  double lambda = 0;
  FixedMeasure fixed_measure = FixedMeasure::hinge;

  // Inner solver.
  SolverMode inner_mode = SolverMode::theoretical;
  std::optional<double> stepsize;  // empty: 1/L estimate (analytic_qp) or 1e-3 (Adam)
  long batch_size = 0;             // 0: full batch (analytic_qp) or 128 (enc_dec)
  long budget = 200;
  std::optional<double> clip_lower;
  std::optional<double> clip_upper;
  AdamParams adam{0.9, 0.999, 1e-8, 0.0};
  std::optional<CandidateRule> candidate;
  int grad_norm_probes = 8;

  // analytic_qp
  std::string qp = "scalar_bound";

  // enc_dec
  double theta = 0.01;
  long epochs = 25;
  long warm_start_epochs = 5;
  long train_limit = 6000;
  std::optional<long> test_limit;
  std::string data_dir;

  /// Explicitly given entries, key -> trimmed value.
  std::map<std::string, std::string> entries;

  /// FNV-1a 64 hash of the sorted explicit entries, as 16 hex digits.
  std::string hash() const;
  /// Sorted "key=value" lines of the explicit entries.
  std::string canonical() const;
};

/// Parses flat `key = value` text (`#` starts a comment). Unknown keys,
/// duplicates, malformed values, and keys irrelevant to the chosen task or
/// method are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

std::string to_string(Task t);
std::string to_string(Method m);

}  // namespace seqpen::bench
