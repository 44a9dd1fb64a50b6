#pragma once

#include <array>
#include <span>

#include "samcl/eval/result_matrix.hpp"
#include "samcl/reg/objective.hpp"

namespace samcl {

/// Registration quality of one pair under the forward transform exp(v).
/// Dice uses a nearest-neighbour warp of the moving label map.
template <class Real>
double pair_metric(const ImagePair<Real>& pair, const Tensor<Real>& disp, MetricKind kind,
                   std::array<double, 2> spacing) {
  if (kind == MetricKind::dice_up) {
    if (!pair.has_labels()) throw ConfigError("dice evaluation requires label maps");
    const LabelMap warped = kernels::warp_nearest(*pair.moving_labels, disp);
    return hard_dice(*pair.fixed_labels, warped, pair.label_count);
  }
  if (!pair.has_landmarks()) throw ConfigError("TRE evaluation requires landmarks");
  return static_cast<double>(tre<Real>(pair.fixed_landmarks, pair.moving_landmarks, disp,
                                       {static_cast<Real>(spacing[0]), static_cast<Real>(spacing[1])}));
}

template <class Real>
TaskScore evaluate_task(const RegistrationModel& model, const ParameterVector<Real>& params,
                        std::span<const ImagePair<Real>> test_pairs, MetricKind kind,
                        std::array<double, 2> spacing = {1.0, 1.0}) {
  TaskScore score;
  for (const auto& pair : test_pairs) {
    score.per_pair.push_back(pair_metric(pair, predict_displacement(model, params, pair), kind, spacing));
  }
  double total = 0;
  for (double v : score.per_pair) total += v;
  score.mean = score.per_pair.empty() ? 0.0 : total / static_cast<double>(score.per_pair.size());
  return score;
}

}  // namespace samcl
