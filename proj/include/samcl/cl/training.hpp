#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "samcl/cl/ewc.hpp"
#include "samcl/cl/hyperparams.hpp"
#include "samcl/cl/sam.hpp"
#include "samcl/core/rng.hpp"
#include "samcl/eval/result_matrix.hpp"
#include "samcl/replay/memory_buffer.hpp"

namespace samcl {

/// Everything a continual run mutates. Copying it is a complete snapshot.
template <class Real, class Item>
struct StrategyState {
  StrategyKind kind = StrategyKind::samcl;
  ParameterVector<Real> params;
  ParameterVector<Real> initial_params;
  AdamState<Real> adam;
  MemoryBuffer<Item> buffer;
  std::vector<EwcAnchor<Real>> anchors;
  Rng rng;
  std::size_t task = 0;        // task currently being trained
  std::size_t iteration = 0;   // iterations finished within `task`
  std::uint64_t total_iterations = 0;
  std::vector<std::vector<TaskScore>> rows;  // R rows completed so far
  std::uint64_t replay_skips = 0;
  std::uint64_t sam_fallbacks = 0;
};

/// Fresh state: one shared model for the whole stream.
template <class Real, class Item>
StrategyState<Real, Item> make_state(StrategyKind kind, ParameterVector<Real> initial, const HyperParams& hyper,
                                     std::uint64_t seed) {
  StrategyState<Real, Item> state;
  state.kind = kind;
  state.params = initial;
  state.initial_params = std::move(initial);
  state.adam = AdamState<Real>(state.params.size(), static_cast<Real>(hyper.adam_beta1),
                               static_cast<Real>(hyper.adam_beta2), static_cast<Real>(hyper.adam_epsilon));
  state.buffer = MemoryBuffer<Item>(hyper.buffer_capacity, derive_seed(seed, 1));
  state.rng = Rng(derive_seed(seed, 2));
  return state;
}

template <class Real, class Item>
struct RunHooks {
  /// Scores the given parameters on every task's test set (one R row).
  std::function<std::vector<TaskScore>(const ParameterVector<Real>&)> evaluate;
  std::function<void(const std::string&)> log;
  std::function<void(const StrategyState<Real, Item>&)> checkpoint;
  std::size_t checkpoint_every = 0;        // iterations; 0 disables periodic checkpoints
  std::uint64_t stop_after_iterations = 0; // 0 = run to completion
  std::size_t train_tasks = 0;             // 0 = all tasks
};

/// k item pointers: without replacement when k <= n, otherwise with replacement.
template <class Item>
std::vector<const Item*> draw_batch(Rng& rng, std::span<const Item> items, std::size_t k) {
  std::vector<const Item*> out;
  out.reserve(k);
  if (k > items.size()) {
    for (std::size_t i = 0; i < k; ++i) out.push_back(&items[uniform_index(rng, items.size())]);
    return out;
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
    out.push_back(&items[order[i]]);
  }
  return out;
}

/// Plain (optionally EWC-penalised) update on one batch of the active task.
template <TrainingProblem P>
void sequential_step(const P& problem, StrategyState<typename P::Real, typename P::Item>& state,
                     std::span<const typename P::Item* const> batch, const HyperParams& hyper) {
  using Real = typename P::Real;
  auto result = problem.loss_and_gradient(state.params, batch);
  if (state.kind == StrategyKind::ewc) {
    add_ewc_gradient(state.anchors, state.params, static_cast<Real>(hyper.ewc_lambda), result.gradient);
  }
  state.params = inner_update(state.params, result.gradient, hyper.inner_rule, state.adam,
                              static_cast<Real>(hyper.inner_lr));
}

/// One outer iteration of sharpness-aware meta-continual learning on a batch of the
/// active task: per-sample SAM inner steps, reservoir insertion, one SAM step on a
/// replay batch, then the meta interpolation toward theta_0. MER is the rho = 0 case.
template <TrainingProblem P>
void samcl_batch_step(const P& problem, StrategyState<typename P::Real, typename P::Item>& state,
                      std::span<const typename P::Item* const> current, const HyperParams& hyper,
                      const std::function<void(const std::string&)>& log = {}) {
  using Real = typename P::Real;
  using Item = typename P::Item;
  const Real rho = state.kind == StrategyKind::mer ? Real(0) : static_cast<Real>(hyper.sam_rho);
  const Real lr = static_cast<Real>(hyper.inner_lr);
  const ParameterVector<Real> theta0 = state.params;

  for (const Item* item : current) {
    const Item* single[] = {item};
    auto sam = sam_gradient(problem, state.params, std::span<const Item* const>(single), rho);
    if (sam.zero_gradient_fallback) {
      ++state.sam_fallbacks;
      if (log) log("sam: zero gradient, plain step (task " + std::to_string(state.task) + ")");
    }
    state.params = inner_update(state.params, sam.at_perturbed.gradient, hyper.inner_rule, state.adam, lr);
  }
  for (const Item* item : current) state.buffer.insert(*item);

  if (state.buffer.empty()) {
    ++state.replay_skips;
    if (log) log("replay: buffer empty, step skipped (task " + std::to_string(state.task) + ")");
  } else {
    const auto replay = state.buffer.sample(std::min(current.size(), state.buffer.size()));
    auto sam = sam_gradient(problem, state.params, std::span<const Item* const>(replay), rho);
    if (sam.zero_gradient_fallback) {
      ++state.sam_fallbacks;
      if (log) log("sam: zero gradient on replay batch, plain step");
    }
    state.params = inner_update(state.params, sam.at_perturbed.gradient, hyper.inner_rule, state.adam, lr);
  }
  state.params = meta_update(state.params, theta0, static_cast<Real>(hyper.meta_lr), hyper.meta_update);
}

/// Diagonal Fisher: mean of squared batch gradients over `batches` draws from `items`.
template <TrainingProblem P>
EwcAnchor<typename P::Real> estimate_anchor(const P& problem, const ParameterVector<typename P::Real>& params,
                                            std::span<const typename P::Item> items, std::size_t batch_size,
                                            std::size_t batches, Rng& rng) {
  using Real = typename P::Real;
  EwcAnchor<Real> anchor{params, std::vector<Real>(params.size(), Real(0))};
  if (batches == 0) return anchor;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto batch = draw_batch(rng, items, batch_size);
    const auto g = problem.loss_and_gradient(params, std::span<const typename P::Item* const>(batch)).gradient;
    for (std::size_t i = 0; i < g.size(); ++i) anchor.fisher[i] += g[i] * g[i];
  }
  for (auto& f : anchor.fisher) f /= static_cast<Real>(batches);
  return anchor;
}

/// Trains `state` through the task stream according to its strategy, appending one R row
/// per task. Resumable: a state captured by the checkpoint hook continues exactly where
/// it left off. Returns false if stopped early by `stop_after_iterations`.
template <TrainingProblem P>
bool run_strategy(const P& problem, StrategyState<typename P::Real, typename P::Item>& state,
                  std::span<const std::span<const typename P::Item>> train_sets, const HyperParams& hyper,
                  const RunHooks<typename P::Real, typename P::Item>& hooks) {
  using Item = typename P::Item;
  hyper.validate();
  const std::size_t tasks = train_sets.size();
  if (tasks == 0) throw ConfigError("run_strategy: empty task stream");
  for (const auto& set : train_sets) {
    if (set.empty()) throw ConfigError("run_strategy: a task has no training pairs");
  }
  auto log = [&](const std::string& line) {
    if (hooks.log) hooks.log(line);
  };
  auto tick = [&]() {
    ++state.iteration;
    ++state.total_iterations;
    if (hooks.checkpoint && hooks.checkpoint_every > 0 && state.total_iterations % hooks.checkpoint_every == 0) {
      hooks.checkpoint(state);
    }
    return !(hooks.stop_after_iterations > 0 && state.total_iterations >= hooks.stop_after_iterations);
  };

  if (state.kind == StrategyKind::none) {
    if (state.rows.empty()) state.rows.assign(tasks, hooks.evaluate(state.params));
    return true;
  }

  if (state.kind == StrategyKind::multitask) {
    const std::size_t total = tasks * hyper.iterations_per_task;
    while (state.iteration < total) {
      std::vector<const Item*> batch;
      for (std::size_t k = 0; k < hyper.inner_batch; ++k) {
        const auto& set = train_sets[uniform_index(state.rng, tasks)];
        batch.push_back(&set[uniform_index(state.rng, set.size())]);
      }
      sequential_step(problem, state, std::span<const Item* const>(batch), hyper);
      if (!tick()) return false;
    }
    if (state.rows.empty()) state.rows.assign(tasks, hooks.evaluate(state.params));
    return true;
  }

  const std::size_t train_tasks = hooks.train_tasks > 0 ? std::min(hooks.train_tasks, tasks) : tasks;
  while (state.task < train_tasks) {
    const auto items = train_sets[state.task];
    while (state.iteration < hyper.iterations_per_task) {
      const auto batch = draw_batch(state.rng, items, hyper.inner_batch);
      const std::span<const Item* const> view(batch);
      if (state.kind == StrategyKind::samcl || state.kind == StrategyKind::mer) {
        samcl_batch_step(problem, state, view, hyper, hooks.log);
      } else {
        sequential_step(problem, state, view, hyper);
      }
      if (!tick()) return false;
    }
    if (state.kind == StrategyKind::ewc) {
      state.anchors.push_back(estimate_anchor(problem, state.params, items, hyper.inner_batch,
                                              hyper.fisher_batches, state.rng));
    }
    state.rows.push_back(hooks.evaluate(state.params));
    log("task " + std::to_string(state.task) + " done after " + std::to_string(state.total_iterations) +
        " iterations; replay skips " + std::to_string(state.replay_skips) + ", sam fallbacks " +
        std::to_string(state.sam_fallbacks));
    ++state.task;
    state.iteration = 0;
    state.adam.reset();
    if (state.kind == StrategyKind::independent) state.params = state.initial_params;
    if (hooks.checkpoint && hooks.checkpoint_every > 0) hooks.checkpoint(state);
  }
  return true;
}

}  // namespace samcl
