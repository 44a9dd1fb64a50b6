#pragma once

#include <cstddef>
#include <string>

#include "samcl/core/errors.hpp"
#include "samcl/core/optim.hpp"

namespace samcl {

enum class StrategyKind { sequential, mer, samcl, ewc, multitask, independent, none };

inline std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::sequential: return "sequential";
    case StrategyKind::mer: return "mer";
    case StrategyKind::samcl: return "samcl";
    case StrategyKind::ewc: return "ewc";
    case StrategyKind::multitask: return "multitask";
    case StrategyKind::independent: return "independent";
    case StrategyKind::none: return "none";
  }
  return "?";
}

inline StrategyKind parse_strategy(const std::string& s) {
  for (auto k : {StrategyKind::sequential, StrategyKind::mer, StrategyKind::samcl, StrategyKind::ewc,
                 StrategyKind::multitask, StrategyKind::independent, StrategyKind::none}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown strategy '" + s + "'");
}

/// How the outer meta step combines the post-inner-loop theta with theta_0.
enum class MetaUpdate {
  reptile,  // theta_0 + beta (theta - theta_0)
  literal   // theta + beta (theta - theta_0)
};

inline std::string to_string(MetaUpdate m) { return m == MetaUpdate::reptile ? "reptile" : "literal"; }
inline std::string to_string(InnerRule r) { return r == InnerRule::adam ? "adam" : "sgd"; }

struct HyperParams {
  double inner_lr = 1e-4;   // alpha
  double meta_lr = 0.25;    // beta
  double sam_rho = 0.05;    // rho
  std::size_t inner_batch = 4;  // s
  std::size_t iterations_per_task = 500;
  InnerRule inner_rule = InnerRule::adam;
  double ewc_lambda = 100;
  std::size_t fisher_batches = 100;
  std::size_t buffer_capacity = 200;  // b
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  MetaUpdate meta_update = MetaUpdate::reptile;

  void validate() const {
    if (!(inner_lr > 0)) throw ConfigError("hyper.inner_lr must be > 0");
    if (!(meta_lr >= 0 && meta_lr <= 1)) throw ConfigError("hyper.meta_lr must lie in [0,1]");
    if (!(sam_rho >= 0)) throw ConfigError("hyper.sam_rho must be >= 0");
    if (inner_batch < 1) throw ConfigError("hyper.inner_batch must be >= 1");
    if (!(ewc_lambda >= 0)) throw ConfigError("hyper.ewc_lambda must be >= 0");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("hyper.adam_beta1 must lie in [0,1)");
    if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("hyper.adam_beta2 must lie in [0,1)");
    if (!(adam_epsilon > 0)) throw ConfigError("hyper.adam_epsilon must be > 0");
  }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

}  // namespace samcl
