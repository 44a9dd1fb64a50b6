#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "samcl/cl/registration_problem.hpp"
#include "samcl/cl/training.hpp"
#include "samcl/eval/evaluate.hpp"
#include "samcl/eval/ttest.hpp"
#include "samcl/harness/checkpoint.hpp"
#include "samcl/harness/config.hpp"
#include "samcl/taskgen/dataset_io.hpp"

namespace samcl {

struct RunOptions {
  bool resume = false;
  std::uint64_t stop_after_iterations = 0;  // halt (checkpoint kept) once a strategy reaches this many iterations
  std::size_t threads = 1;                  // evaluation workers
  bool echo = false;                        // mirror run.log on stderr
};

struct StrategyOutcome {
  StrategyKind kind = StrategyKind::samcl;
  ResultMatrix matrix;
  SummaryReport summary;
  std::uint64_t replay_skips = 0;
  std::uint64_t sam_fallbacks = 0;
};

struct ExperimentResult {
  bool complete = true;
  std::vector<std::string> task_names;
  std::vector<MetricKind> metric_kind;
  std::vector<StrategyOutcome> outcomes;
};

inline MatrixKind matrix_kind(StrategyKind k) {
  switch (k) {
    case StrategyKind::independent: return MatrixKind::independent;
    case StrategyKind::none:
    case StrategyKind::multitask: return MatrixKind::static_model;
    default: return MatrixKind::continual;
  }
}

inline std::string to_string(MatrixKind k) {
  switch (k) {
    case MatrixKind::continual: return "continual";
    case MatrixKind::independent: return "independent";
    case MatrixKind::static_model: return "static";
  }
  return "?";
}

/// FNV-1a over the canonical JSON of everything that affects results.
inline std::string config_fingerprint(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("checkpoint_every");
  j.erase("strategy");
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

/// Per-pair scores of one test set, optionally spread over worker threads. The result
/// does not depend on the thread count.
template <class Real>
TaskScore evaluate_task_parallel(const RegistrationModel& model, const ParameterVector<Real>& params,
                                 std::span<const ImagePair<Real>> pairs, MetricKind kind,
                                 std::array<double, 2> spacing, std::size_t threads) {
  if (threads <= 1 || pairs.size() < 2) return evaluate_task(model, params, pairs, kind, spacing);
  TaskScore score;
  score.per_pair.resize(pairs.size());
  std::vector<std::thread> workers;
  const std::size_t n = std::min(threads, pairs.size());
  for (std::size_t t = 0; t < n; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = t; i < pairs.size(); i += n) {
        score.per_pair[i] = pair_metric(pairs[i], predict_displacement(model, params, pairs[i]), kind, spacing);
      }
    });
  }
  for (auto& w : workers) w.join();
  double total = 0;
  for (double v : score.per_pair) total += v;
  score.mean = total / static_cast<double>(pairs.size());
  return score;
}

/// One R row: the model scored on every task's test split.
template <class Real>
std::vector<TaskScore> evaluate_row(const RegistrationModel& model, const ParameterVector<Real>& params,
                                    const TaskStream<Real>& stream, std::size_t threads = 1) {
  std::vector<TaskScore> row;
  for (const auto& task : stream.tasks) {
    row.push_back(evaluate_task_parallel(model, params, std::span<const ImagePair<Real>>(task.test),
                                         task.spec.metric(), task.spec.loss.spacing, threads));
  }
  return row;
}

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Final-row per-pair scores used for significance tests (diagonal for independent runs).
inline const std::vector<double>& final_scores(const StrategyOutcome& o, std::size_t task) {
  const auto& m = o.matrix;
  const std::size_t row = m.kind == MatrixKind::independent ? task : m.tasks() - 1;
  return m.rows.at(row).at(task).per_pair;
}

inline void write_results(const ExperimentResult& result, const ExperimentConfig& config,
                          const std::filesystem::path& dir) {
  std::ofstream csv(dir / "results.csv", std::ios::binary | std::ios::trunc);
  std::ofstream per_pair(dir / "per_pair.csv", std::ios::binary | std::ios::trunc);
  csv << "strategy,i,j,metric_kind,value\n";
  per_pair << "strategy,i,j,pair,value\n";
  for (const auto& o : result.outcomes) {
    for (std::size_t i = 0; i < o.matrix.rows.size(); ++i) {
      for (std::size_t j = 0; j < o.matrix.rows[i].size(); ++j) {
        const auto& score = o.matrix.rows[i][j];
        csv << to_string(o.kind) << ',' << i << ',' << j << ',' << to_string(o.matrix.metric_kind[j]) << ','
            << format_value(score.mean) << '\n';
        for (std::size_t k = 0; k < score.per_pair.size(); ++k) {
          per_pair << to_string(o.kind) << ',' << i << ',' << j << ',' << k << ',' << format_value(score.per_pair[k])
                   << '\n';
        }
      }
    }
  }
  if (!csv || !per_pair) throw FormatError((dir / "results.csv").string(), "cannot write results");

  const StrategyOutcome* reference = nullptr;
  for (const auto& o : result.outcomes) {
    if (o.kind == StrategyKind::samcl) reference = &o;
  }
  nlohmann::json strategies = nlohmann::json::object();
  for (const auto& o : result.outcomes) {
    nlohmann::json entry = {{"matrix_kind", to_string(o.matrix.kind)},
                            {"avg", o.summary.avg},
                            {"bwt", o.summary.bwt},
                            {"bwt_defined", o.summary.bwt_defined},
                            {"replay_skips", o.replay_skips},
                            {"sam_fallbacks", o.sam_fallbacks}};
    if (reference && &o != reference) {
      nlohmann::json p = nlohmann::json::array();
      for (std::size_t j = 0; j < o.matrix.tasks(); ++j) {
        const auto& a = final_scores(o, j);
        const auto& b = final_scores(*reference, j);
        if (a.size() >= 2 && a.size() == b.size()) p.push_back(paired_ttest(a, b));
        else p.push_back(nullptr);
      }
      entry["p_value_vs_samcl"] = p;
    }
    strategies[to_string(o.kind)] = entry;
  }
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : result.metric_kind) kinds.push_back(to_string(k));
  const nlohmann::json summary = {{"seed", config.seed},
                                  {"precision", to_string(config.precision)},
                                  {"tasks", result.task_names},
                                  {"metric_kind", kinds},
                                  {"strategies", strategies}};
  std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
  out << summary.dump(2) << '\n';
  if (!out) throw FormatError((dir / "summary.json").string(), "cannot write summary");
}

namespace exp_detail {

class RunLog {
 public:
  RunLog(const std::filesystem::path& path, bool append, bool echo)
      : out_(path, append ? std::ios::app : std::ios::trunc), echo_(echo) {}
  void operator()(const std::string& line) {
    out_ << line << '\n';
    out_.flush();
    if (echo_) std::cerr << line << '\n';
  }

 private:
  std::ofstream out_;
  bool echo_;
};

template <class Real>
ExperimentResult run_typed(const ExperimentConfig& config, const RunOptions& options) {
  namespace fs = std::filesystem;
  config.validate();
  const fs::path dir(config.output_dir);
  fs::create_directories(dir / "checkpoints");
  {
    std::ofstream resolved(dir / "config.json", std::ios::binary | std::ios::trunc);
    resolved << to_json(config).dump(2) << '\n';
    if (!resolved) throw FormatError((dir / "config.json").string(), "cannot write resolved configuration");
  }
  RunLog log(dir / "run.log", options.resume, options.echo);
  log("run: seed " + std::to_string(config.seed) + ", precision " + to_string(config.precision) +
      (options.resume ? ", resuming" : ""));
  log("seeds: init " + std::to_string(config.init_seed()) + ", buffer " + std::to_string(derive_seed(config.seed, 1)) +
      ", sampler " + std::to_string(derive_seed(config.seed, 2)));

  const auto stream = build_stream<Real>(config.stream());
  ExperimentResult result;
  std::vector<LossSpec> losses;
  for (const auto& task : stream.tasks) {
    result.task_names.push_back(task.spec.name);
    result.metric_kind.push_back(task.spec.metric());
    losses.push_back(task.spec.loss);
    log("task " + task.spec.name + ": family " + to_string(task.spec.family) + ", seed " +
        std::to_string(task.spec.seed) + ", pairs " + std::to_string(task.train.size()) + "/" +
        std::to_string(task.val.size()) + "/" + std::to_string(task.test.size()));
  }
  const RegistrationModel model = config.model.build();
  const RegistrationProblem<Real> problem(model, losses);
  std::vector<std::span<const ImagePair<Real>>> train_sets;
  for (const auto& task : stream.tasks) train_sets.emplace_back(task.train);

  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : result.metric_kind) kinds.push_back(to_string(k));
  const nlohmann::json meta = {{"fingerprint", config_fingerprint(config)},
                               {"model", to_json(config.model)},
                               {"tasks", result.task_names},
                               {"metric_kind", kinds}};

  for (const auto kind : config.strategies) {
    const fs::path ckpt_path = dir / "checkpoints" / (to_string(kind) + ".ckpt");
    Checkpoint<Real> ckpt;
    ckpt.meta = meta;
    bool loaded = false;
    if (options.resume && fs::exists(ckpt_path)) {
      ckpt = load_checkpoint<Real>(ckpt_path);
      if (ckpt.meta.value("fingerprint", "") != meta["fingerprint"] || ckpt.state.kind != kind) {
        throw ConfigError("checkpoint " + ckpt_path.string() + " was written by a different configuration");
      }
      loaded = true;
      log(to_string(kind) + ": resumed at task " + std::to_string(ckpt.state.task) + ", iteration " +
          std::to_string(ckpt.state.iteration) + (ckpt.complete ? " (complete)" : ""));
    } else {
      ckpt.state = make_state<Real, ImagePair<Real>>(kind, model.network.initial_parameters<Real>(config.init_seed()),
                                                     config.hyper, config.seed);
    }
    auto& state = ckpt.state;
    if (!(loaded && ckpt.complete)) {
      RunHooks<Real, ImagePair<Real>> hooks;
      hooks.evaluate = [&](const ParameterVector<Real>& p) { return evaluate_row(model, p, stream, options.threads); };
      hooks.log = [&](const std::string& line) { log(to_string(kind) + ": " + line); };
      hooks.checkpoint = [&](const StrategyState<Real, ImagePair<Real>>& s) {
        Checkpoint<Real> snapshot{s, meta, false};
        save_checkpoint(snapshot, ckpt_path);
      };
      hooks.checkpoint_every = config.checkpoint_every;
      hooks.stop_after_iterations = options.stop_after_iterations;
      bool finished = false;
      try {
        finished = run_strategy(problem, state, std::span<const std::span<const ImagePair<Real>>>(train_sets),
                                config.hyper, hooks);
      } catch (const NumericalError& e) {
        log(to_string(kind) + ": numerical failure in " + e.term() + "; last checkpoint kept");
        throw;
      }
      if (!finished) {
        ckpt.complete = false;
        save_checkpoint(ckpt, ckpt_path);
        log(to_string(kind) + ": stopped after " + std::to_string(state.total_iterations) + " iterations");
        result.complete = false;
        return result;
      }
      ckpt.complete = true;
      save_checkpoint(ckpt, ckpt_path);
    }
    StrategyOutcome outcome;
    outcome.kind = kind;
    outcome.matrix = ResultMatrix{result.metric_kind, state.rows, matrix_kind(kind)};
    outcome.summary = compute_summary(outcome.matrix);
    outcome.replay_skips = state.replay_skips;
    outcome.sam_fallbacks = state.sam_fallbacks;
    std::string avg;
    for (double a : outcome.summary.avg) avg += " " + format_value(a);
    log(to_string(kind) + ": done, AVG" + avg);
    result.outcomes.push_back(std::move(outcome));
  }
  write_results(result, config, dir);
  return result;
}

}  // namespace exp_detail

/// Builds the stream, trains every configured strategy and writes config.json (fully
/// resolved), results.csv, per_pair.csv, summary.json, run.log and checkpoints under
/// config.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  return config.precision == Precision::float64 ? exp_detail::run_typed<double>(config, options)
                                                : exp_detail::run_typed<float>(config, options);
}

/// Materialises the configured stream and saves it as a dataset directory.
inline void generate_dataset(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  save_dataset(build_stream<double>(config.stream()), out_dir);
}

struct EvaluationRow {
  std::vector<std::string> task_names;
  std::vector<MetricKind> metric_kind;
  std::vector<TaskScore> scores;
};

/// Scores a checkpoint's parameters on every task of a dataset directory.
template <class Real>
EvaluationRow evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                                  std::size_t threads = 1) {
  const auto ckpt = load_checkpoint<Real>(checkpoint);
  ModelConfig mc;
  try {
    mc = config_detail::model_from_json(ckpt.meta.at("model"), mc);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(checkpoint.string(), e.what());
  }
  const auto model = mc.build();
  if (model.network.parameter_count() != ckpt.state.params.size()) {
    throw FormatError(checkpoint.string(), "parameter count does not match the stored architecture");
  }
  const auto stream = load_dataset<Real>(dataset);
  EvaluationRow row;
  for (const auto& task : stream.tasks) {
    if (task.spec.height != mc.architecture.height || task.spec.width != mc.architecture.width) {
      throw ConfigError("dataset task '" + task.spec.name + "' grid differs from the model grid");
    }
    row.task_names.push_back(task.spec.name);
    row.metric_kind.push_back(task.spec.metric());
  }
  row.scores = evaluate_row(model, ckpt.state.params, stream, threads);
  return row;
}

/// Reads only the precision recorded in a checkpoint header.
inline Precision checkpoint_precision(const std::filesystem::path& checkpoint) {
  try {
    (void)load_checkpoint<double>(checkpoint);
    return Precision::float64;
  } catch (const FormatError&) {
    (void)load_checkpoint<float>(checkpoint);
    return Precision::float32;
  }
}

}  // namespace samcl
