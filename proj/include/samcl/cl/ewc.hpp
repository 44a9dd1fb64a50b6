#pragma once

#include <vector>

#include "samcl/core/optim.hpp"

namespace samcl {

/// Parameters and diagonal Fisher information recorded at the end of one task.
template <class Real>
struct EwcAnchor {
  ParameterVector<Real> params;
  std::vector<Real> fisher;

  friend bool operator==(const EwcAnchor&, const EwcAnchor&) = default;
};

/// sum_k (lambda / 2) sum_i F_k,i (theta_i - theta*_k,i)^2
template <class Real>
Real ewc_penalty(const std::vector<EwcAnchor<Real>>& anchors, const ParameterVector<Real>& params, Real lambda) {
  Real total = 0;
  for (const auto& anchor : anchors) {
    require_same_length<Real>(anchor.params, params, "ewc_penalty");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Real d = params[i] - anchor.params[i];
      total += anchor.fisher[i] * d * d;
    }
  }
  return lambda / 2 * total;
}

template <class Real>
void add_ewc_gradient(const std::vector<EwcAnchor<Real>>& anchors, const ParameterVector<Real>& params, Real lambda,
                      GradientVector<Real>& grad) {
  for (const auto& anchor : anchors) {
    require_same_length<Real>(anchor.params, params, "add_ewc_gradient");
    for (std::size_t i = 0; i < params.size(); ++i) grad[i] += lambda * anchor.fisher[i] * (params[i] - anchor.params[i]);
  }
}

}  // namespace samcl
