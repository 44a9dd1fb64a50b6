#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "samcl/reg/fields.hpp"
#include "samcl/reg/image_pair.hpp"
#include "samcl/reg/losses.hpp"
#include "samcl/reg/network.hpp"

namespace samcl {

enum class Dissimilarity { lncc, lncc_plus_dice, lncc_plus_tre };

struct LossSpec {
  Dissimilarity dissimilarity = Dissimilarity::lncc;
  std::size_t lncc_window = 3;
  double lncc_weight = 1.0;
  double dice_weight = 1.0;
  double tre_weight = 1.0;
  double membrane_weight = 1.0;
  double bending_weight = 1.0;
  std::array<double, 2> spacing{1.0, 1.0};  // mm per pixel (x, y)

  void validate() const {
    if (lncc_window % 2 == 0 || lncc_window < 1) throw ConfigError("loss: lncc_window must be odd and >= 1");
    for (double w : {lncc_weight, dice_weight, tre_weight, membrane_weight, bending_weight}) {
      if (!(w >= 0)) throw ConfigError("loss: weights must be >= 0");
    }
    if (!(spacing[0] > 0 && spacing[1] > 0)) throw ConfigError("loss: spacing must be > 0");
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// Throws ConfigError if `pair` lacks the annotations `spec` needs.
template <class Real>
void require_annotations(const ImagePair<Real>& pair, const LossSpec& spec) {
  if (spec.dissimilarity == Dissimilarity::lncc_plus_dice && !pair.has_labels()) {
    throw ConfigError("loss lncc_plus_dice requires label maps");
  }
  if (spec.dissimilarity == Dissimilarity::lncc_plus_tre && !pair.has_landmarks()) {
    throw ConfigError("loss lncc_plus_tre requires landmarks");
  }
}

/// Network layout plus the transform settings shared by training and evaluation.
struct RegistrationModel {
  Network network;
  bool symmetric = true;
  int n_squarings = 7;
};

template <class Real>
struct LossTerms {
  ad::Var<Real> total;
  ad::Var<Real> similarity;  // -lncc_weight * lncc
  std::optional<ad::Var<Real>> dice;  // dice_weight * (1 - soft dice)
  std::optional<ad::Var<Real>> landmarks;  // tre_weight * mean landmark distance
  ad::Var<Real> membrane;
  ad::Var<Real> bending;
  ad::Var<Real> velocity;
};

/// Builds D(f, m o phi) + R(phi) on the tape for one pair.
template <class Real>
LossTerms<Real> registration_loss(ad::Tape<Real>& tape, const RegistrationModel& model,
                                  const Network::Bound<Real>& bound, const ImagePair<Real>& pair,
                                  const LossSpec& spec) {
  require_annotations(pair, spec);
  const Shape plane{1, pair.height(), pair.width()};
  auto fixed = tape.constant(pair.fixed.reshaped(plane));
  auto moving = tape.constant(pair.moving.reshaped(plane));

  LossTerms<Real> terms;
  terms.velocity = model.network.forward(tape, bound, pair.fixed, pair.moving);
  const auto& v = terms.velocity;

  std::optional<ad::Var<Real>> forward_disp;
  ad::Var<Real> similarity;
  if (model.symmetric) {
    auto to_mid = ad::exponentiate(ad::scale(v, Real(0.5)), model.n_squarings);
    auto from_mid = ad::exponentiate(ad::scale(v, Real(-0.5)), model.n_squarings);
    similarity = ad::lncc(ad::warp(fixed, from_mid), ad::warp(moving, to_mid), spec.lncc_window);
  } else {
    forward_disp = ad::exponentiate(v, model.n_squarings);
    similarity = ad::lncc(fixed, ad::warp(moving, *forward_disp), spec.lncc_window);
  }
  terms.similarity = ad::scale(similarity, static_cast<Real>(-spec.lncc_weight));
  auto total = terms.similarity;

  if (spec.dissimilarity != Dissimilarity::lncc && !forward_disp) {
    forward_disp = ad::exponentiate(v, model.n_squarings);
  }
  if (spec.dissimilarity == Dissimilarity::lncc_plus_dice) {
    auto p = tape.constant(one_hot_foreground<Real>(*pair.fixed_labels, pair.label_count));
    auto q = ad::warp(tape.constant(one_hot_foreground<Real>(*pair.moving_labels, pair.label_count)), *forward_disp);
    auto one_minus = ad::add_scalar(ad::scale(ad::soft_dice(p, q), Real(-1)), Real(1));
    terms.dice = ad::scale(one_minus, static_cast<Real>(spec.dice_weight));
    total = total + *terms.dice;
  }
  if (spec.dissimilarity == Dissimilarity::lncc_plus_tre) {
    const std::array<Real, 2> spacing{static_cast<Real>(spec.spacing[0]), static_cast<Real>(spec.spacing[1])};
    terms.landmarks = ad::scale(ad::landmark_distance(*forward_disp, pair.fixed_landmarks, pair.moving_landmarks, spacing),
                                static_cast<Real>(spec.tre_weight));
    total = total + *terms.landmarks;
  }
  terms.membrane = ad::scale(ad::membrane_energy(v), static_cast<Real>(spec.membrane_weight));
  terms.bending = ad::scale(ad::bending_energy(v), static_cast<Real>(spec.bending_weight));
  terms.total = total + terms.membrane + terms.bending;
  return terms;
}

namespace detail {

template <class Real>
void check_finite(const LossTerms<Real>& terms) {
  auto check = [](const ad::Var<Real>& v, const char* name) {
    if (!std::isfinite(v.item())) throw NumericalError(name);
  };
  check(terms.similarity, "lncc");
  if (terms.dice) check(*terms.dice, "dice");
  if (terms.landmarks) check(*terms.landmarks, "tre");
  check(terms.membrane, "membrane");
  check(terms.bending, "bending");
  check(terms.total, "total");
}

}  // namespace detail

/// A training sample with the loss of its origin task.
template <class Real>
struct Sample {
  const ImagePair<Real>* pair = nullptr;
  const LossSpec* loss = nullptr;
};

/// Mean loss over the batch and its exact reverse-mode gradient with respect to theta.
template <class Real>
LossAndGradient<Real> forward_backward(const RegistrationModel& model, const ParameterVector<Real>& params,
                                       std::span<const Sample<Real>> batch) {
  if (batch.empty()) throw ConfigError("forward_backward: empty batch");
  LossAndGradient<Real> out{Real(0), GradientVector<Real>(params.size())};
  for (const auto& sample : batch) {
    ad::Tape<Real> tape;
    auto bound = model.network.bind(tape, params, true);
    auto terms = registration_loss(tape, model, bound, *sample.pair, *sample.loss);
    detail::check_finite(terms);
    tape.backward(terms.total);
    model.network.accumulate_gradient(tape, bound, out.gradient);
    out.loss += terms.total.item();
  }
  const Real inv = Real(1) / static_cast<Real>(batch.size());
  out.loss *= inv;
  for (auto& g : out.gradient.values()) g *= inv;
  return out;
}

/// Batch loss without gradient.
template <class Real>
Real loss_value(const RegistrationModel& model, const ParameterVector<Real>& params,
                std::span<const Sample<Real>> batch) {
  Real total = 0;
  for (const auto& sample : batch) {
    ad::Tape<Real> tape;
    auto bound = model.network.bind(tape, params, false);
    total += registration_loss(tape, model, bound, *sample.pair, *sample.loss).total.item();
  }
  return total / static_cast<Real>(batch.size());
}

template <class Real>
Tensor<Real> predict_velocity(const RegistrationModel& model, const ParameterVector<Real>& params,
                              const ImagePair<Real>& pair) {
  ad::Tape<Real> tape;
  auto bound = model.network.bind(tape, params, false);
  return model.network.forward(tape, bound, pair.fixed, pair.moving).value();
}

/// Forward displacement exp(v) used for evaluation.
template <class Real>
Tensor<Real> predict_displacement(const RegistrationModel& model, const ParameterVector<Real>& params,
                                  const ImagePair<Real>& pair) {
  return exponentiate(predict_velocity(model, params, pair), model.n_squarings);
}

/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <class Real>
Real relative_error(Real analytic, Real numeric) {
  return std::abs(analytic - numeric) / std::max(Real(1e-8), std::abs(analytic) + std::abs(numeric));
}

/// Central-difference check of d loss / d x at `n_coords` random coordinates of `x`.
/// `loss` maps a point to a scalar; `gradient` is its analytic gradient at x.
/// Bilinear resampling, border clamping and leaky ReLU make the loss piecewise smooth.
/// A coordinate whose stencil straddles a kink gives central differences at `step` and
/// `step / 4` that disagree; it is replaced by a fresh coordinate and counted in `skipped`.
/// At most n_coords replacements are drawn.
template <class Real>
Real check_gradient(std::vector<Real> x, std::span<const Real> gradient,
                    const std::function<Real(const std::vector<Real>&)>& loss, std::size_t n_coords, Real step,
                    std::uint64_t seed = 7, std::size_t* skipped = nullptr) {
  if (skipped) *skipped = 0;
  if (x.empty()) return 0;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  auto central = [&](std::size_t i, Real h) {
    const Real saved = x[i];
    x[i] = saved + h;
    const Real up = loss(x);
    x[i] = saved - h;
    const Real down = loss(x);
    x[i] = saved;
    return (up - down) / (2 * h);
  };
  Real worst = 0;
  std::size_t checked = 0, replaced = 0;
  while (checked < n_coords) {
    const std::size_t i = pick(rng);
    const Real coarse = central(i, step);
    const Real fine = central(i, step / 4);
    if (relative_error(coarse, fine) > Real(1e-5) && replaced < n_coords) {
      ++replaced;
      continue;
    }
    worst = std::max(worst, relative_error(gradient[i], coarse));
    ++checked;
  }
  if (skipped) *skipped = replaced;
  return worst;
}

/// Max relative error of forward_backward's gradient against central differences.
template <class Real>
Real gradient_check(const RegistrationModel& model, const ParameterVector<Real>& params,
                    std::span<const Sample<Real>> batch, std::size_t n_coords, Real step, std::uint64_t seed = 7,
                    std::size_t* skipped = nullptr) {
  if (n_coords < 1) throw ConfigError("gradient_check: n_coords must be >= 1");
  const auto analytic = forward_backward(model, params, batch);
  return check_gradient<Real>(
      params.storage(), analytic.gradient.values(),
      [&](const std::vector<Real>& theta) { return loss_value(model, ParameterVector<Real>(theta), batch); },
      n_coords, step, seed, skipped);
}

}  // namespace samcl
