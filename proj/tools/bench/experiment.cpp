#include "bench/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>

#include "bench/csv.hpp"
#include "seqpen/seqpen.hpp"

namespace seqpen::bench {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return format_number(v); }
std::string num(long v) { return std::to_string(v); }

/// Everything a run writes; flushed on success and on a numeric abort.
struct Artifacts {
  CsvTable results;
  CsvTable trace;
  CsvTable hist;
  CsvTable timeline;
  std::vector<std::pair<std::string, std::string>> manifest;

  void note(const std::string& key, const std::string& value) { manifest.emplace_back(key, value); }

  void flush(const std::string& dir, const ExperimentConfig& config) const {
    fs::create_directories(dir);
    results.write(dir + "/results.csv");
    trace.write(dir + "/trace.csv");
    hist.write(dir + "/violations_hist.csv");
    timeline.write(dir + "/timeline.csv");
    std::string m;
    m += "library_version=" SEQPEN_VERSION "\n";
    m += "config_hash=" + config.hash() + "\n";
    m += "seed=" + std::to_string(config.seed) + "\n";
    m += "task=" + to_string(config.task) + "\n";
    m += "method=" + to_string(config.method) + "\n";
    m += std::string("scale=") + (config.scale == Scale::paper ? "paper" : "desk") + "\n";
    m += std::string("precision=") + (config.precision == Precision::float32 ? "float" : "double") +
         "\n";
    for (const auto& [k, v] : manifest) m += k + "=" + v + "\n";
    for (const auto& [k, v] : config.entries) m += "config." + k + "=" + v + "\n";
    write_text_file(dir + "/manifest.txt", m);
  }
};

std::vector<std::string> trace_header(Index coords) {
  std::vector<std::string> h = {"k",           "tau",          "eps",
                                "penalty",     "objective",    "grad_norm",
                                "mean_violation", "satisfied_fraction", "max_violation",
                                "lambda_max",  "lambda_mean",  "lambda_nonzero",
                                "inner_iterates", "clip_activations"};
  for (Index i = 0; i < coords; ++i) h.push_back("x" + std::to_string(i));
  return h;
}

template <typename Scalar>
std::vector<std::string> trace_row(const OuterRecord<Scalar>& r, Index coords) {
  std::vector<std::string> row = {num(r.k),
                                  num(static_cast<double>(r.tau)),
                                  num(static_cast<double>(r.eps)),
                                  num(static_cast<double>(r.penalty_value)),
                                  num(static_cast<double>(r.objective_value)),
                                  num(static_cast<double>(r.grad_norm_estimate)),
                                  num(r.feasibility.mean_violation),
                                  num(r.feasibility.satisfied_fraction),
                                  num(r.feasibility.max_violation),
                                  num(r.multipliers.max),
                                  num(r.multipliers.mean),
                                  num(static_cast<long>(r.multipliers.nonzero)),
                                  num(r.inner_iterates),
                                  num(r.clip_activations)};
  for (Index i = 0; i < coords; ++i) row.push_back(num(static_cast<double>(r.candidate(i))));
  return row;
}

template <typename Scalar>
SGDConfig<Scalar> base_inner(const ExperimentConfig& c, Index dim) {
  SGDConfig<Scalar> cfg;
  cfg.mode = c.inner_mode;
  cfg.budget = c.budget;
  cfg.adam = c.adam;
  cfg.candidate = c.candidate;
  cfg.grad_norm_probes = c.grad_norm_probes;
  cfg.rng_seed = detail::mix_seed(c.seed, 1);
  if (c.clip_lower) {
    cfg.clip_box = ClipBox<Scalar>::uniform(dim, static_cast<Scalar>(*c.clip_lower),
                                            static_cast<Scalar>(*c.clip_upper));
  }
  return cfg;
}

AnalyticQP<double> make_qp(const std::string& name) {
  if (name == "halfplane") return halfplane_qp<double>();
  if (name == "inactive_bound") return inactive_bound_qp<double>();
  return scalar_bound_qp<double>();
}

int run_qp(const ExperimentConfig& c, Artifacts& art) {
  const AnalyticQP<double> qp = make_qp(c.qp);
  const Index n = qp.dimension();
  const Vector<double> x0 = Vector<double>::Zero(n);
  SGDConfig<double> inner = base_inner<double>(c, n);
  inner.batch_size = c.batch_size > 0 ? c.batch_size : qp.num_samples();

  // 1/L from a probe of the penalty's smoothness around the current point.
  auto auto_step = [&](double tau, const Vector<double>& at) {
    const ClipBox<double> box{at.array() - 1.0, at.array() + 1.0};
    return 1.0 / smoothness_estimate(qp, tau, box, 16, c.seed).L_tau_C;
  };

  art.trace = CsvTable(trace_header(n));
  OuterTrace<double> trace;
  if (c.method == Method::sequential) {
    Schedule<double> s;
    s.tau0 = c.tau0;
    s.gamma = c.gamma;
    s.eps0 = c.eps0;
    s.eps_decay = c.eps_decay;
    s.max_outer = c.max_outer;
    s.feasibility_tol = c.feasibility_tol;
    s.inner_config = inner;
    if (!c.stepsize) {
      s.configure_inner = [&](SGDConfig<double>& cfg, const OuterContext<double>& ctx) {
        cfg.stepsize = auto_step(ctx.tau, *ctx.start);
      };
    } else {
      s.inner_config.stepsize = *c.stepsize;
    }
    trace = sequential_penalty_train<double>(qp, c.penalty, s, x0, [&](const auto& r) {
      art.trace.add_row(trace_row(r, n));
      art.timeline.add_row({num(r.k + 1), num(r.feasibility.satisfied_fraction),
                            num(r.feasibility.mean_violation),
                            num(static_cast<double>(r.objective_value))});
    });
  } else {
    const double lambda = c.method == Method::fixed ? c.lambda : 0.0;
    inner.stepsize = c.stepsize ? *c.stepsize : auto_step(lambda, x0);
    trace = fixed_penalty_train<double>(qp, lambda, inner, x0, c.fixed_measure);
    const auto& r = trace.records.back();
    art.trace.add_row(trace_row(r, n));
    art.timeline.add_row({num(1L), num(r.feasibility.satisfied_fraction),
                          num(r.feasibility.mean_violation),
                          num(static_cast<double>(r.objective_value))});
  }

  const auto& last = trace.records.back();
  const Vector<double>& x = last.candidate;
  const BatchValues<double> values = all_values(qp, x);
  const FeasibilityStats fs = feasibility_from_values(values.constraints);
  const PenaltySpec<double> spec(c.method == Method::sequential ? c.penalty : PenaltyKind::linear,
                                 std::max(static_cast<double>(last.tau), 1e-300));
  const KKTReport kkt = kkt_residual(qp, x, multiplier_estimate(qp, spec, x));
  art.results.add_row({"train", num(static_cast<double>(last.objective_value)), num(fs.mean_violation),
                       num(fs.satisfied_fraction), num(fs.max_violation), num(kkt.stationarity_residual),
                       num((x - qp.x_star()).norm())});
  for (Index j = 0; j < qp.num_samples(); ++j) {
    for (Index i = 0; i < qp.constraints_per_sample(); ++i) {
      art.hist.add_row({"train", num(static_cast<long>(j)), num(static_cast<long>(i)),
                        num(values.constraints(j, i))});
    }
  }
  art.note("termination", std::string(to_string(trace.termination)));
  art.note("outer_iterations", std::to_string(trace.records.size()));
  return kExitOk;
}

std::string find_idx(const std::string& dir, const std::string& stem) {
  for (const std::string& name : {stem + ".gz", stem}) {
    if (fs::exists(dir + "/" + name)) return dir + "/" + name;
  }
  throw IdxError(IdxErrorCode::io_error,
                 "dataset file " + stem + "[.gz] not found under " + dir +
                     " (set data_dir or SEQPEN_DATA_DIR)");
}

template <typename Scalar>
void add_timeline(Artifacts& art, const char* phase, long epoch, const EncDecTask<Scalar>& train,
                  const EncDecTask<Scalar>& test, const Vector<Scalar>& x) {
  for (const auto* task : {&train, &test}) {
    const EncDecMetrics m = task->metrics(x);
    art.timeline.add_row({phase, num(epoch), task == &train ? "train" : "test", num(m.accuracy),
                          num(m.satisfied_fraction), num(m.mean_violation)});
  }
}

template <typename Scalar>
int run_enc_dec(const ExperimentConfig& c, Artifacts& art) {
  const std::string dir = resolve_data_dir(c);
  auto train_data = std::make_shared<const ImageDataset>(load_idx_dataset(
      find_idx(dir, "train-images-idx3-ubyte"), find_idx(dir, "train-labels-idx1-ubyte"),
      c.train_limit, Split::train));
  auto test_data = std::make_shared<const ImageDataset>(load_idx_dataset(
      find_idx(dir, "t10k-images-idx3-ubyte"), find_idx(dir, "t10k-labels-idx1-ubyte"),
      c.test_limit, Split::test));
  art.note("train_samples", std::to_string(train_data->size()));
  art.note("test_samples", std::to_string(test_data->size()));
  if (c.scale == Scale::paper && train_data->size() < c.train_limit) {
    std::cerr << "warning: paper scale asks for " << c.train_limit << " training samples, found "
              << train_data->size() << "\n";
  }

  const auto theta = static_cast<Scalar>(c.theta);
  const EncDecTask<Scalar> train(train_data, theta);
  const EncDecTask<Scalar> test(test_data, theta);
  const Index dec = train.decoder().parameter_count();

  SGDConfig<Scalar> inner = base_inner<Scalar>(c, train.dimension());
  inner.batch_size = c.batch_size > 0 ? c.batch_size : 128;
  inner.stepsize = static_cast<Scalar>(c.stepsize ? *c.stepsize : 1e-3);

  const Vector<Scalar> init = train.init_parameters(c.seed);
  Vector<Scalar> x = init;

  // Classification-only pretraining; the decoder is not part of it.
  if (c.warm_start_epochs > 0) {
    SGDConfig<Scalar> warm = inner;
    warm.mode = SolverMode::practical;
    warm.budget = c.warm_start_epochs;
    warm.rng_seed = detail::mix_seed(c.seed, 2);
    x = fixed_penalty_train<Scalar>(train, Scalar(0), warm, x, FixedMeasure::hinge,
                                    [&](long e, const Vector<Scalar>& z) {
                                      add_timeline(art, "warm_start", e, train, test, z);
                                    })
            .records.back()
            .candidate;
    x.tail(dec) = init.tail(dec);
  }

  art.trace = CsvTable(trace_header(0));
  OuterTrace<Scalar> trace;
  if (c.method == Method::sequential) {
    Schedule<Scalar> s;
    s.tau0 = static_cast<Scalar>(c.tau0);
    s.gamma = static_cast<Scalar>(c.gamma);
    s.eps0 = static_cast<Scalar>(c.eps0);
    s.eps_decay = static_cast<Scalar>(c.eps_decay);
    s.epochs_per_update = c.epochs_per_update;
    s.max_outer = c.epochs / c.epochs_per_update;
    s.feasibility_tol = c.feasibility_tol;
    s.inner_config = inner;
    s.inner_config.mode = SolverMode::practical;
    trace = sequential_penalty_train<Scalar>(train, c.penalty, s, x, [&](const auto& r) {
      art.trace.add_row(trace_row(r, 0));
      add_timeline(art, "train", (r.k + 1) * c.epochs_per_update, train, test, r.candidate);
    });
  } else {
    const Scalar lambda = c.method == Method::fixed ? static_cast<Scalar>(c.lambda) : Scalar(0);
    inner.budget = c.epochs;
    trace = fixed_penalty_train<Scalar>(
        train, lambda, inner, x, c.fixed_measure,
        [&](long e, const Vector<Scalar>& z) { add_timeline(art, "train", e, train, test, z); });
    art.trace.add_row(trace_row(trace.records.back(), 0));
  }

  Vector<Scalar> final_x = trace.records.back().candidate;
  // The objective-only model never trains its decoder.
  if (c.method == Method::objective_only) final_x.tail(dec) = init.tail(dec);

  for (const auto* task : {&train, &test}) {
    const EncDecMetrics m = task->metrics(final_x);
    const char* split = task == &train ? "train" : "test";
    art.results.add_row({split, num(m.ce_loss), num(m.accuracy), num(m.mse_loss),
                         num(m.mean_violation), num(m.satisfied_fraction)});
    for (std::size_t j = 0; j < m.sample_mse.size(); ++j) {
      art.hist.add_row({split, num(static_cast<long>(j)), num(m.sample_mse[j])});
    }
  }
  art.note("termination", std::string(to_string(trace.termination)));
  art.note("outer_iterations", std::to_string(trace.records.size()));
  return kExitOk;
}

Artifacts empty_artifacts(Task task) {
  if (task == Task::analytic_qp) {
    return {CsvTable({"split", "objective", "mean_violation", "satisfied_fraction", "max_violation",
                      "kkt_stationarity", "distance_to_solution"}),
            CsvTable(trace_header(0)), CsvTable({"split", "sample", "constraint", "g"}),
            CsvTable({"k", "satisfied_fraction", "mean_violation", "objective"}),
            {}};
  }
  return {CsvTable({"split", "ce_loss", "accuracy", "mse_loss", "mean_violation",
                    "satisfied_fraction"}),
          CsvTable(trace_header(0)), CsvTable({"split", "sample", "mse"}),
          CsvTable({"phase", "epoch", "split", "accuracy", "satisfied_fraction", "mean_violation"}),
          {}};
}

}  // namespace

std::string resolve_data_dir(const ExperimentConfig& config) {
  if (!config.data_dir.empty()) return config.data_dir;
  if (const char* env = std::getenv("SEQPEN_DATA_DIR"); env && *env) return env;
  return "data/digits";
}

std::string resolve_output_dir(const ExperimentConfig& config, const std::string& config_path,
                               const std::optional<std::string>& out_override) {
  if (out_override) return *out_override;
  if (!config.output.empty()) return config.output;
  return "runs/" + fs::path(config_path).stem().string();
}

int run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  Artifacts art = empty_artifacts(config.task);
  int code = kExitOk;
  try {
    if (config.task == Task::analytic_qp) {
      code = run_qp(config, art);
    } else if (config.precision == Precision::float32) {
      code = run_enc_dec<float>(config, art);
    } else {
      code = run_enc_dec<double>(config, art);
    }
    art.note("status", "ok");
  } catch (const SolverAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    art.note("status", "numeric_abort");
    code = kExitNumeric;
  } catch (const NonFiniteError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    art.note("status", "numeric_abort");
    code = kExitNumeric;
  }
  art.flush(out_dir, config);
  return code;
}

int run_config_file(const std::string& config_path, const std::optional<std::string>& out_override) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  try {
    return run_experiment(config, resolve_output_dir(config, config_path, out_override));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace seqpen::bench
