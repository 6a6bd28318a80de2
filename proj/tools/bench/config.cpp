#include "bench/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace seqpen::bench {

namespace {

constexpr unsigned kQp = 1U << 0;
constexpr unsigned kEncDec = 1U << 1;
constexpr unsigned kAnyTask = kQp | kEncDec;
constexpr unsigned kSeq = 1U << 0;
constexpr unsigned kFixed = 1U << 1;
constexpr unsigned kObjOnly = 1U << 2;
constexpr unsigned kAnyMethod = kSeq | kFixed | kObjOnly;

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct KeySpec {
  unsigned tasks;
  unsigned methods;
  Setter set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("expected a finite number, got '" + v + "'");
  }
  return out;
}

long parse_long(const std::string& v) {
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  return out;
}

double positive(double v, const char* what) {
  if (!(v > 0)) throw std::invalid_argument(std::string(what) + " must be > 0");
  return v;
}

long at_least(long v, long lo) {
  if (v < lo) throw std::invalid_argument("must be >= " + std::to_string(lo));
  return v;
}

template <typename E>
E parse_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string("|") + name;
  }
  throw std::invalid_argument("expected one of " + names + ", got '" + v + "'");
}

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = {
      {"task", {kAnyTask, kAnyMethod, [](auto&, auto&) {}}},
      {"method", {kAnyTask, kAnyMethod, [](auto&, auto&) {}}},
      {"seed", {kAnyTask, kAnyMethod,
                [](ExperimentConfig& c, const std::string& v) {
                  c.seed = static_cast<std::uint64_t>(at_least(parse_long(v), 0));
                }}},
      {"output", {kAnyTask, kAnyMethod, [](ExperimentConfig& c, const std::string& v) { c.output = v; }}},
      {"scale", {kAnyTask, kAnyMethod,
                 [](ExperimentConfig& c, const std::string& v) {
                   c.scale = parse_enum<Scale>(v, {{"desk", Scale::desk}, {"paper", Scale::paper}});
                 }}},
      {"precision", {kAnyTask, kAnyMethod,
                     [](ExperimentConfig& c, const std::string& v) {
                       c.precision = parse_enum<Precision>(
                           v, {{"double", Precision::float64}, {"float", Precision::float32}});
                     }}},
      {"penalty", {kAnyTask, kSeq,
                   [](ExperimentConfig& c, const std::string& v) {
                     c.penalty = parse_enum<PenaltyKind>(
                         v, {{"quadratic", PenaltyKind::quadratic}, {"linear", PenaltyKind::linear}});
                   }}},
      {"tau0", {kAnyTask, kSeq,
                [](ExperimentConfig& c, const std::string& v) { c.tau0 = positive(parse_double(v), "tau0"); }}},
      {"gamma", {kAnyTask, kSeq,
                 [](ExperimentConfig& c, const std::string& v) {
                   c.gamma = parse_double(v);
                   if (!(c.gamma > 1)) throw std::invalid_argument("gamma must be > 1");
                 }}},
      {"eps0", {kAnyTask, kSeq,
                [](ExperimentConfig& c, const std::string& v) { c.eps0 = positive(parse_double(v), "eps0"); }}},
      {"eps_decay", {kAnyTask, kSeq,
                     [](ExperimentConfig& c, const std::string& v) {
                       c.eps_decay = parse_double(v);
                       if (!(c.eps_decay > 0 && c.eps_decay < 1)) {
                         throw std::invalid_argument("eps_decay must lie in (0, 1)");
                       }
                     }}},
      {"max_outer", {kQp, kSeq,
                     [](ExperimentConfig& c, const std::string& v) { c.max_outer = at_least(parse_long(v), 1); }}},
      {"epochs_per_update", {kEncDec, kSeq,
                             [](ExperimentConfig& c, const std::string& v) {
                               c.epochs_per_update = at_least(parse_long(v), 1);
                             }}},
      {"feasibility_tol", {kAnyTask, kSeq,
                           [](ExperimentConfig& c, const std::string& v) {
                             c.feasibility_tol = parse_double(v);
                             if (c.feasibility_tol < 0) throw std::invalid_argument("must be >= 0");
                           }}},
      {"lambda", {kAnyTask, kFixed,
                  [](ExperimentConfig& c, const std::string& v) {
                    c.lambda = parse_double(v);
                    if (c.lambda < 0) throw std::invalid_argument("lambda must be >= 0");
                  }}},
      {"fixed_measure", {kAnyTask, kFixed,
                         [](ExperimentConfig& c, const std::string& v) {
                           c.fixed_measure = parse_enum<FixedMeasure>(
                               v, {{"hinge", FixedMeasure::hinge}, {"raw", FixedMeasure::raw}});
                         }}},
      {"inner_mode", {kAnyTask, kAnyMethod,
                      [](ExperimentConfig& c, const std::string& v) {
                        c.inner_mode = parse_enum<SolverMode>(
                            v, {{"theoretical", SolverMode::theoretical},
                                {"practical", SolverMode::practical}});
                      }}},
      {"stepsize", {kAnyTask, kAnyMethod,
                    [](ExperimentConfig& c, const std::string& v) {
                      c.stepsize = positive(parse_double(v), "stepsize");
                    }}},
      {"batch_size", {kAnyTask, kAnyMethod,
                      [](ExperimentConfig& c, const std::string& v) {
                        c.batch_size = at_least(parse_long(v), 1);
                      }}},
      {"budget", {kQp, kAnyMethod,
                  [](ExperimentConfig& c, const std::string& v) { c.budget = at_least(parse_long(v), 0); }}},
      {"clip_lower", {kAnyTask, kAnyMethod,
                      [](ExperimentConfig& c, const std::string& v) { c.clip_lower = parse_double(v); }}},
      {"clip_upper", {kAnyTask, kAnyMethod,
                      [](ExperimentConfig& c, const std::string& v) { c.clip_upper = parse_double(v); }}},
      {"beta1", {kAnyTask, kAnyMethod,
                 [](ExperimentConfig& c, const std::string& v) { c.adam.beta1 = parse_double(v); }}},
      {"beta2", {kAnyTask, kAnyMethod,
                 [](ExperimentConfig& c, const std::string& v) { c.adam.beta2 = parse_double(v); }}},
      {"eps_hat", {kAnyTask, kAnyMethod,
                   [](ExperimentConfig& c, const std::string& v) {
                     c.adam.eps_hat = positive(parse_double(v), "eps_hat");
                   }}},
      {"weight_decay", {kAnyTask, kAnyMethod,
                        [](ExperimentConfig& c, const std::string& v) {
                          c.adam.weight_decay = parse_double(v);
                          if (c.adam.weight_decay < 0) throw std::invalid_argument("must be >= 0");
                        }}},
      {"candidate", {kAnyTask, kAnyMethod,
                     [](ExperimentConfig& c, const std::string& v) {
                       c.candidate = parse_enum<CandidateRule>(
                           v, {{"uniform", CandidateRule::uniform_sample},
                               {"last", CandidateRule::last_iterate}});
                     }}},
      {"grad_norm_probes", {kAnyTask, kAnyMethod,
                            [](ExperimentConfig& c, const std::string& v) {
                              c.grad_norm_probes = static_cast<int>(at_least(parse_long(v), 1));
                            }}},
      {"qp", {kQp, kAnyMethod,
              [](ExperimentConfig& c, const std::string& v) {
                if (v != "scalar_bound" && v != "halfplane" && v != "inactive_bound") {
                  throw std::invalid_argument(
                      "expected one of scalar_bound|halfplane|inactive_bound, got '" + v + "'");
                }
                c.qp = v;
              }}},
      {"theta", {kEncDec, kAnyMethod,
                 [](ExperimentConfig& c, const std::string& v) { c.theta = positive(parse_double(v), "theta"); }}},
      {"epochs", {kEncDec, kAnyMethod,
                  [](ExperimentConfig& c, const std::string& v) { c.epochs = at_least(parse_long(v), 1); }}},
      {"warm_start_epochs", {kEncDec, kAnyMethod,
                             [](ExperimentConfig& c, const std::string& v) {
                               c.warm_start_epochs = at_least(parse_long(v), 0);
                             }}},
      {"train_limit", {kEncDec, kAnyMethod,
                       [](ExperimentConfig& c, const std::string& v) {
                         c.train_limit = at_least(parse_long(v), 1);
                       }}},
      {"test_limit", {kEncDec, kAnyMethod,
                      [](ExperimentConfig& c, const std::string& v) {
                        c.test_limit = at_least(parse_long(v), 1);
                      }}},
      {"data_dir", {kEncDec, kAnyMethod,
                    [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; }}},
  };
  return table;
}

void apply_task_defaults(ExperimentConfig& c) {
  if (c.task == Task::enc_dec) {
    c.penalty = PenaltyKind::linear;
    c.tau0 = 100;
    c.gamma = 1.01;
    c.inner_mode = SolverMode::practical;
    c.adam.weight_decay = 0.001;
    c.precision = Precision::float32;
    if (c.scale == Scale::paper) {
      c.epochs = 250;
      c.train_limit = 60000;
    }
  }
}

}  // namespace

ConfigError::ConfigError(int line, std::string field, const std::string& message)
    : std::runtime_error("config" + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (field.empty() ? std::string() : ": field '" + field + "'") + ": " +
                         message),
      line_(line),
      field_(std::move(field)),
      message_(message) {}

std::string to_string(Task t) { return t == Task::enc_dec ? "enc_dec" : "analytic_qp"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::sequential: return "sequential";
    case Method::fixed: return "fixed";
    case Method::objective_only: return "objective_only";
  }
  return "?";
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

ExperimentConfig parse_config(const std::string& text) {
  const auto& table = key_table();
  std::map<std::string, std::pair<std::string, int>> raw;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, "", "missing key before '='");
    if (!table.count(key)) throw ConfigError(lineno, key, "unknown key");
    if (value.empty()) throw ConfigError(lineno, key, "missing value");
    if (raw.count(key)) {
      throw ConfigError(lineno, key,
                        "duplicate key (first set on line " + std::to_string(raw[key].second) + ")");
    }
    raw[key] = {value, lineno};
  }

  ExperimentConfig c;
  for (const char* required : {"task", "method"}) {
    if (!raw.count(required)) throw ConfigError(0, required, "required key is missing");
  }
  try {
    c.task = parse_enum<Task>(raw["task"].first,
                              {{"analytic_qp", Task::analytic_qp}, {"enc_dec", Task::enc_dec}});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(raw["task"].second, "task", e.what());
  }
  try {
    c.method = parse_enum<Method>(raw["method"].first, {{"sequential", Method::sequential},
                                                        {"fixed", Method::fixed},
                                                        {"objective_only", Method::objective_only}});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(raw["method"].second, "method", e.what());
  }
  if (raw.count("scale")) {
    try {
      table.at("scale").set(c, raw["scale"].first);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(raw["scale"].second, "scale", e.what());
    }
  }
  apply_task_defaults(c);

  const unsigned task_bit = c.task == Task::enc_dec ? kEncDec : kQp;
  const unsigned method_bit =
      c.method == Method::sequential ? kSeq : c.method == Method::fixed ? kFixed : kObjOnly;
  for (const auto& [key, vl] : raw) {
    const auto& spec = table.at(key);
    if (!(spec.tasks & task_bit)) {
      throw ConfigError(vl.second, key, "not valid for task=" + to_string(c.task));
    }
    if (!(spec.methods & method_bit)) {
      throw ConfigError(vl.second, key, "not valid for method=" + to_string(c.method));
    }
    try {
      spec.set(c, vl.first);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(vl.second, key, e.what());
    }
    c.entries[key] = vl.first;
  }
  if (c.method == Method::fixed && !raw.count("lambda")) {
    throw ConfigError(0, "lambda", "required for method=fixed");
  }
  if (c.clip_lower.has_value() != c.clip_upper.has_value()) {
    throw ConfigError(0, "clip_lower", "clip_lower and clip_upper must be given together");
  }
  if (c.clip_lower && !(*c.clip_lower <= *c.clip_upper)) {
    throw ConfigError(raw["clip_upper"].second, "clip_upper", "must be >= clip_lower");
  }
  if (c.inner_mode == SolverMode::practical && c.candidate == CandidateRule::uniform_sample) {
    throw ConfigError(raw["candidate"].second, "candidate",
                      "uniform is only available with inner_mode=theoretical");
  }
  if (c.task == Task::enc_dec && c.method == Method::sequential &&
      c.epochs % c.epochs_per_update != 0) {
    throw ConfigError(0, "epochs_per_update", "must divide epochs");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), e.field(), e.message() + " [" + path + "]");
  }
}

}  // namespace seqpen::bench
