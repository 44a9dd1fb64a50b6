#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "samcl/cl/hyperparams.hpp"
#include "samcl/reg/network.hpp"
#include "samcl/reg/objective.hpp"
#include "samcl/taskgen/generator.hpp"

namespace samcl {

enum class Precision { float64, float32 };

inline std::string to_string(Precision p) { return p == Precision::float64 ? "float64" : "float32"; }

struct ModelConfig {
  Architecture architecture;
  bool symmetric = true;
  int n_squarings = 7;

  [[nodiscard]] RegistrationModel build() const { return RegistrationModel{Network(architecture), symmetric, n_squarings}; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A complete, validated experiment description. Defaults reproduce the reference
/// hyperparameters, so `{"strategy": "samcl"}` is a full configuration.
struct ExperimentConfig {
  std::vector<StrategyKind> strategies{StrategyKind::samcl};
  HyperParams hyper;
  ModelConfig model;
  std::vector<TaskSpec> tasks;
  std::vector<std::string> order;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::size_t checkpoint_every = 100;
  Precision precision = Precision::float64;

  [[nodiscard]] StreamConfig stream() const { return StreamConfig{tasks, order}; }
  [[nodiscard]] std::uint64_t init_seed() const { return derive_seed(seed, 0); }

  void validate() const {
    if (strategies.empty()) throw ConfigError("strategy: at least one strategy is required");
    hyper.validate();
    if (model.n_squarings < 0 || model.n_squarings > 30) throw ConfigError("model.n_squarings must lie in [0,30]");
    if (!(model.architecture.leaky_slope >= 0)) throw ConfigError("model.leaky_slope must be >= 0");
    (void)Network(model.architecture);
    const auto ordered = ordered_tasks(stream());
    for (const auto& t : ordered) {
      if (t.height != model.architecture.height || t.width != model.architecture.width) {
        throw ConfigError("task '" + t.name + "': grid " + std::to_string(t.height) + "x" + std::to_string(t.width) +
                          " differs from model grid");
      }
    }
  }
};

namespace config_detail {

using nlohmann::json;
using json_detail::check_keys;
using json_detail::read;

inline HyperParams hyper_from_json(const json& j, HyperParams h) {
  const std::string where = "hyper";
  check_keys(j, {"inner_lr", "meta_lr", "sam_rho", "inner_batch", "iterations_per_task", "inner_rule", "ewc_lambda",
                 "fisher_batches", "buffer_capacity", "adam_beta1", "adam_beta2", "adam_epsilon", "meta_update"},
             where);
  read(j, "inner_lr", h.inner_lr, where);
  read(j, "meta_lr", h.meta_lr, where);
  read(j, "sam_rho", h.sam_rho, where);
  read(j, "inner_batch", h.inner_batch, where);
  read(j, "iterations_per_task", h.iterations_per_task, where);
  read(j, "ewc_lambda", h.ewc_lambda, where);
  read(j, "fisher_batches", h.fisher_batches, where);
  read(j, "buffer_capacity", h.buffer_capacity, where);
  read(j, "adam_beta1", h.adam_beta1, where);
  read(j, "adam_beta2", h.adam_beta2, where);
  read(j, "adam_epsilon", h.adam_epsilon, where);
  std::string rule = to_string(h.inner_rule), meta = to_string(h.meta_update);
  read(j, "inner_rule", rule, where);
  read(j, "meta_update", meta, where);
  if (rule == "adam") h.inner_rule = InnerRule::adam;
  else if (rule == "sgd") h.inner_rule = InnerRule::sgd;
  else throw ConfigError("hyper.inner_rule must be 'adam' or 'sgd'");
  if (meta == "reptile") h.meta_update = MetaUpdate::reptile;
  else if (meta == "literal") h.meta_update = MetaUpdate::literal;
  else throw ConfigError("hyper.meta_update must be 'reptile' or 'literal'");
  return h;
}

inline ModelConfig model_from_json(const json& j, ModelConfig m) {
  const std::string where = "model";
  check_keys(j, {"height", "width", "encoder", "decoder", "kernel", "leaky_slope", "symmetric", "n_squarings"}, where);
  read(j, "height", m.architecture.height, where);
  read(j, "width", m.architecture.width, where);
  read(j, "encoder", m.architecture.encoder, where);
  read(j, "decoder", m.architecture.decoder, where);
  read(j, "kernel", m.architecture.kernel, where);
  read(j, "leaky_slope", m.architecture.leaky_slope, where);
  read(j, "symmetric", m.symmetric, where);
  read(j, "n_squarings", m.n_squarings, where);
  return m;
}

}  // namespace config_detail

inline nlohmann::json to_json(const HyperParams& h) {
  return {{"inner_lr", h.inner_lr},
          {"meta_lr", h.meta_lr},
          {"sam_rho", h.sam_rho},
          {"inner_batch", h.inner_batch},
          {"iterations_per_task", h.iterations_per_task},
          {"inner_rule", to_string(h.inner_rule)},
          {"ewc_lambda", h.ewc_lambda},
          {"fisher_batches", h.fisher_batches},
          {"buffer_capacity", h.buffer_capacity},
          {"adam_beta1", h.adam_beta1},
          {"adam_beta2", h.adam_beta2},
          {"adam_epsilon", h.adam_epsilon},
          {"meta_update", to_string(h.meta_update)}};
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"height", m.architecture.height},
          {"width", m.architecture.width},
          {"encoder", m.architecture.encoder},
          {"decoder", m.architecture.decoder},
          {"kernel", m.architecture.kernel},
          {"leaky_slope", m.architecture.leaky_slope},
          {"symmetric", m.symmetric},
          {"n_squarings", m.n_squarings}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json strategies = nlohmann::json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : c.tasks) tasks.push_back(to_json(t));
  return {{"strategy", strategies}, {"hyper", to_json(c.hyper)},   {"model", to_json(c.model)},
          {"tasks", tasks},         {"order", c.order},            {"seed", c.seed},
          {"output_dir", c.output_dir}, {"checkpoint_every", c.checkpoint_every},
          {"precision", to_string(c.precision)}};
}

/// Parses and validates a configuration. Tasks named like a default task start from
/// that task's settings; task seeds not given explicitly derive from `seed`.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  check_keys(j, {"strategy", "hyper", "model", "tasks", "order", "seed", "output_dir", "checkpoint_every", "precision"},
             "config");
  ExperimentConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "checkpoint_every", c.checkpoint_every, "config");
  read(j, "order", c.order, "config");
  if (j.contains("strategy")) {
    const auto& s = j.at("strategy");
    c.strategies.clear();
    if (s.is_string()) {
      c.strategies.push_back(parse_strategy(s.get<std::string>()));
    } else if (s.is_array()) {
      for (const auto& e : s) {
        if (!e.is_string()) throw ConfigError("config.strategy: entries must be strings");
        c.strategies.push_back(parse_strategy(e.get<std::string>()));
      }
    } else {
      throw ConfigError("config.strategy: expected a string or a list of strings");
    }
  }
  if (j.contains("precision")) {
    std::string p;
    read(j, "precision", p, "config");
    if (p == "float64") c.precision = Precision::float64;
    else if (p == "float32") c.precision = Precision::float32;
    else throw ConfigError("config.precision must be 'float64' or 'float32'");
  }
  if (j.contains("hyper")) c.hyper = hyper_from_json(j.at("hyper"), c.hyper);
  if (j.contains("model")) c.model = model_from_json(j.at("model"), c.model);

  const auto defaults = default_tasks(c.seed, c.model.architecture.height, c.model.architecture.width);
  if (!j.contains("tasks")) {
    c.tasks = defaults;
  } else {
    const auto& list = j.at("tasks");
    if (!list.is_array()) throw ConfigError("config.tasks: expected a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "config.tasks[" + std::to_string(i) + "]";
      if (!list[i].is_object() || !list[i].contains("name")) throw ConfigError(where + ": every task needs a name");
      const auto name = list[i].at("name").get<std::string>();
      TaskSpec base;
      base.height = c.model.architecture.height;
      base.width = c.model.architecture.width;
      base.seed = derive_seed(c.seed, 200 + i);
      for (const auto& d : defaults) {
        if (d.name == name) base = d;
      }
      c.tasks.push_back(task_from_json(list[i], base, where));
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json read_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

}  // namespace samcl
