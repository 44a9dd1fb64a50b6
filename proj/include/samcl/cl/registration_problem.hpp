#pragma once

#include <span>
#include <utility>
#include <vector>

#include "samcl/cl/sam.hpp"
#include "samcl/reg/objective.hpp"

namespace samcl {

/// Registration objective over image pairs; each pair is scored with the loss of the
/// task it came from (pair.task_id indexes `loss_by_task`).
template <class R>
class RegistrationProblem {
 public:
  using Real = R;
  using Item = ImagePair<R>;

  RegistrationProblem(RegistrationModel model, std::vector<LossSpec> loss_by_task)
      : model_(std::move(model)), loss_by_task_(std::move(loss_by_task)) {
    for (const auto& spec : loss_by_task_) spec.validate();
  }

  [[nodiscard]] const RegistrationModel& model() const noexcept { return model_; }
  [[nodiscard]] const LossSpec& loss_for(int task_id) const {
    if (task_id < 0 || static_cast<std::size_t>(task_id) >= loss_by_task_.size()) {
      throw ConfigError("no loss configured for task id " + std::to_string(task_id));
    }
    return loss_by_task_[static_cast<std::size_t>(task_id)];
  }

  [[nodiscard]] LossAndGradient<R> loss_and_gradient(const ParameterVector<R>& theta,
                                                     std::span<const Item* const> batch) const {
    std::vector<Sample<R>> samples;
    samples.reserve(batch.size());
    for (const Item* pair : batch) samples.push_back({pair, &loss_for(pair->task_id)});
    return forward_backward(model_, theta, std::span<const Sample<R>>(samples));
  }

 private:
  RegistrationModel model_;
  std::vector<LossSpec> loss_by_task_;
};

static_assert(TrainingProblem<RegistrationProblem<double>>);

}  // namespace samcl
