#pragma once

#include <concepts>
#include <span>

#include "samcl/cl/hyperparams.hpp"
#include "samcl/core/optim.hpp"

namespace samcl {

/// A differentiable training objective over batches of items. Each item knows its
/// origin task, so replayed items are scored with their own task's loss.
template <class P>
concept TrainingProblem = requires(const P& p, const ParameterVector<typename P::Real>& theta,
                                   std::span<const typename P::Item* const> batch) {
  { p.loss_and_gradient(theta, batch) } -> std::same_as<LossAndGradient<typename P::Real>>;
};

inline constexpr double kSamGradientFloor = 1e-12;

/// Worst-case first-order perturbation in the rho-ball: rho * g / ||g||, or 0 for a vanishing g.
template <class Real>
GradientVector<Real> sam_perturbation(const GradientVector<Real>& grad, Real rho) {
  GradientVector<Real> eps(grad.size());
  const Real norm = grad.norm();
  if (!(norm > Real(kSamGradientFloor)) || rho == 0) return eps;
  const Real scale = rho / norm;
  for (std::size_t i = 0; i < grad.size(); ++i) eps[i] = scale * grad[i];
  return eps;
}

template <class Real>
struct SamResult {
  LossAndGradient<Real> at_perturbed;  // loss and gradient evaluated at theta + eps
  bool zero_gradient_fallback = false;
};

/// Gradient of the loss at theta + eps(theta). `params` is never modified.
template <TrainingProblem P>
SamResult<typename P::Real> sam_gradient(const P& problem, const ParameterVector<typename P::Real>& params,
                                         std::span<const typename P::Item* const> batch, typename P::Real rho) {
  using Real = typename P::Real;
  SamResult<Real> out{problem.loss_and_gradient(params, batch), false};
  if (rho == 0) return out;
  if (!(out.at_perturbed.gradient.norm() > Real(kSamGradientFloor))) {
    out.zero_gradient_fallback = true;
    return out;
  }
  const auto eps = sam_perturbation(out.at_perturbed.gradient, rho);
  ParameterVector<Real> perturbed = params;
  for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed[i] += eps[i];
  out.at_perturbed = problem.loss_and_gradient(perturbed, batch);
  return out;
}

/// theta_0 + beta (theta - theta_0); exact at beta = 0 and beta = 1.
template <class Real>
ParameterVector<Real> reptile_interpolate(const ParameterVector<Real>& theta, const ParameterVector<Real>& theta0,
                                          Real beta) {
  require_same_length<Real>(theta, theta0, "reptile_interpolate");
  if (beta == 1) return theta;
  if (beta == 0) return theta0;
  ParameterVector<Real> out = theta0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += beta * (theta[i] - theta0[i]);
  return out;
}

/// Outer update after one batch of inner steps.
template <class Real>
ParameterVector<Real> meta_update(const ParameterVector<Real>& theta, const ParameterVector<Real>& theta0,
                                  Real beta, MetaUpdate rule) {
  if (rule == MetaUpdate::reptile) return reptile_interpolate(theta, theta0, beta);
  require_same_length<Real>(theta, theta0, "meta_update");
  ParameterVector<Real> out = theta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += beta * (theta[i] - theta0[i]);
  return out;
}

}  // namespace samcl
