#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samcl/core/errors.hpp"

namespace samcl {

namespace detail {

/// Flat float vector with a distinct type per role, so parameters and gradients don't mix.
template <class Real, class Tag>
class FlatVector {
 public:
  FlatVector() = default;
  explicit FlatVector(std::size_t n, Real fill = Real(0)) : values_(n, fill) {}
  explicit FlatVector(std::vector<Real> values) : values_(std::move(values)) {}

  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<Real> values() noexcept { return values_; }
  [[nodiscard]] std::span<const Real> values() const noexcept { return values_; }
  [[nodiscard]] std::vector<Real>& storage() noexcept { return values_; }
  [[nodiscard]] const std::vector<Real>& storage() const noexcept { return values_; }
  Real& operator[](std::size_t i) noexcept { return values_[i]; }
  const Real& operator[](std::size_t i) const noexcept { return values_[i]; }

  [[nodiscard]] Real norm() const {
    Real s = 0;
    for (Real v : values_) s += v * v;
    return std::sqrt(s);
  }

  [[nodiscard]] bool all_finite() const {
    for (Real v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const FlatVector&, const FlatVector&) = default;

 private:
  std::vector<Real> values_;
};

struct ParameterTag {};
struct GradientTag {};

}  // namespace detail

/// Network parameters theta. Copying is a bit-exact snapshot.
template <class Real>
using ParameterVector = detail::FlatVector<Real, detail::ParameterTag>;

template <class Real>
using GradientVector = detail::FlatVector<Real, detail::GradientTag>;

template <class Real>
struct LossAndGradient {
  Real loss{};
  GradientVector<Real> gradient;
};

template <class Real, class A, class B>
void require_same_length(const A& a, const B& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

/// params - lr * grad.
template <class Real>
ParameterVector<Real> sgd_step(const ParameterVector<Real>& params, const GradientVector<Real>& grad, Real lr) {
  require_same_length<Real>(params, grad, "sgd_step");
  if (!(lr > 0)) throw ConfigError("sgd_step: learning rate must be > 0");
  ParameterVector<Real> out = params;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grad[i];
  return out;
}

template <class Real>
struct AdamState {
  std::vector<Real> first_moment;
  std::vector<Real> second_moment;
  std::uint64_t step = 0;
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);

  AdamState() = default;
  explicit AdamState(std::size_t n, Real b1 = Real(0.9), Real b2 = Real(0.999), Real eps = Real(1e-8))
      : first_moment(n, Real(0)), second_moment(n, Real(0)), beta1(b1), beta2(b2), epsilon(eps) {}

  void reset() {
    std::fill(first_moment.begin(), first_moment.end(), Real(0));
    std::fill(second_moment.begin(), second_moment.end(), Real(0));
    step = 0;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Adam with bias correction. Mutates `state` and returns the new parameters.
template <class Real>
ParameterVector<Real> adam_step(const ParameterVector<Real>& params, const GradientVector<Real>& grad,
                                AdamState<Real>& state, Real lr) {
  if (!(lr > 0)) throw ConfigError("adam_step: learning rate must be > 0");
  require_same_length<Real>(params, grad, "adam_step");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameter length");
  }
  ++state.step;
  const auto t = static_cast<Real>(state.step);
  const Real correction1 = 1 - std::pow(state.beta1, t);
  const Real correction2 = 1 - std::pow(state.beta2, t);
  ParameterVector<Real> out = params;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Real& m = state.first_moment[i];
    Real& v = state.second_moment[i];
    m = state.beta1 * m + (1 - state.beta1) * grad[i];
    v = state.beta2 * v + (1 - state.beta2) * grad[i] * grad[i];
    const Real m_hat = m / correction1;
    const Real v_hat = v / correction2;
    out[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  return out;
}

enum class InnerRule { sgd, adam };

/// One inner-loop update with the configured rule.
template <class Real>
ParameterVector<Real> inner_update(const ParameterVector<Real>& params, const GradientVector<Real>& grad,
                                   InnerRule rule, AdamState<Real>& state, Real lr) {
  return rule == InnerRule::sgd ? sgd_step(params, grad, lr) : adam_step(params, grad, state, lr);
}

}  // namespace samcl
