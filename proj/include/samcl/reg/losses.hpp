#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "samcl/core/ops.hpp"
#include "samcl/core/spatial.hpp"
#include "samcl/reg/image_pair.hpp"

namespace samcl {

inline constexpr double kLnccEpsilon = 1e-5;
inline constexpr double kDiceEpsilon = 1e-5;

namespace ad {

/// Mean over pixels of cov^2 / (var_f * var_g + eps) in a window x window neighbourhood.
/// Inputs are [C,H,W] (usually C = 1).
template <class Real>
Var<Real> lncc(Var<Real> f, Var<Real> g, std::size_t window) {
  if (window % 2 == 0) throw ConfigError("lncc: window must be odd");
  require_same_shape(f.value(), g.value(), "lncc");
  auto mu_f = box_mean(f, window);
  auto mu_g = box_mean(g, window);
  auto cov = box_mean(f * g, window) - mu_f * mu_g;
  auto var_f = box_mean(square(f), window) - square(mu_f);
  auto var_g = box_mean(square(g), window) - square(mu_g);
  auto cc = square(cov) / add_scalar(var_f * var_g, Real(kLnccEpsilon));
  return mean(cc);
}

/// Mean over channels of 2 sum(p q) / (sum p + sum q + eps). p, q: [L,H,W] in [0,1].
template <class Real>
Var<Real> soft_dice(Var<Real> p, Var<Real> q) {
  require_same_shape(p.value(), q.value(), "soft_dice");
  auto overlap = scale(channel_sum(p * q), Real(2));
  auto total = add_scalar(channel_sum(p) + channel_sum(q), Real(kDiceEpsilon));
  return mean(overlap / total);
}

/// Sum over pixels of the squared first differences of every component, divided by H*W.
template <class Real>
Var<Real> membrane_energy(Var<Real> field) {
  const auto pixels = static_cast<Real>(field.value().dim(1) * field.value().dim(2));
  auto gx = spatial_gradient(field, 0);
  auto gy = spatial_gradient(field, 1);
  return scale(sum(square(gx)) + sum(square(gy)), Real(1) / pixels);
}

/// Sum over pixels of (u_xx^2 + u_yy^2 + 2 u_xy^2) per component, divided by H*W.
template <class Real>
Var<Real> bending_energy(Var<Real> field) {
  const auto pixels = static_cast<Real>(field.value().dim(1) * field.value().dim(2));
  auto gx = spatial_gradient(field, 0);
  auto gy = spatial_gradient(field, 1);
  auto gxx = spatial_gradient(gx, 0);
  auto gyy = spatial_gradient(gy, 1);
  auto gxy = spatial_gradient(gx, 1);
  auto total = sum(square(gxx)) + sum(square(gyy)) + scale(sum(square(gxy)), Real(2));
  return scale(total, Real(1) / pixels);
}

/// Mean landmark distance ||(x_f + u(x_f)) - x_m|| scaled by spacing; u: [2,H,W].
template <class Real>
Var<Real> landmark_distance(Var<Real> disp, const std::vector<Point2<Real>>& fixed,
                            const std::vector<Point2<Real>>& moving, std::array<Real, 2> spacing) {
  if (fixed.empty() || fixed.size() != moving.size()) {
    throw ConfigError("landmark loss needs equal, non-empty landmark lists");
  }
  const std::size_t n = fixed.size();
  auto& tape = disp.tape();
  Tensor<Real> offset({2, n});
  Tensor<Real> scaling({2, n});
  for (std::size_t i = 0; i < n; ++i) {
    offset(0, i) = fixed[i].x - moving[i].x;
    offset(1, i) = fixed[i].y - moving[i].y;
    scaling(0, i) = spacing[0];
    scaling(1, i) = spacing[1];
  }
  auto residual = sample_points(disp, fixed) + tape.constant(std::move(offset));
  auto scaled = residual * tape.constant(std::move(scaling));
  return mean(column_norm(scaled, Real(1e-9)));
}

}  // namespace ad

/// LNCC of two [H,W] images.
template <class Real>
Real lncc(const Tensor<Real>& f, const Tensor<Real>& g, std::size_t window) {
  ad::Tape<Real> tape;
  const Shape s{1, f.dim(0), f.dim(1)};
  return ad::lncc(tape.constant(f.reshaped(s)), tape.constant(g.reshaped(s)), window).item();
}

template <class Real>
Real soft_dice(const Tensor<Real>& p, const Tensor<Real>& q) {
  ad::Tape<Real> tape;
  return ad::soft_dice(tape.constant(p), tape.constant(q)).item();
}

template <class Real>
Real membrane_energy(const Tensor<Real>& field) {
  ad::Tape<Real> tape;
  return ad::membrane_energy(tape.constant(field)).item();
}

template <class Real>
Real bending_energy(const Tensor<Real>& field) {
  ad::Tape<Real> tape;
  return ad::bending_energy(tape.constant(field)).item();
}

/// Target registration error: mean over landmarks of ||(x_f + u(x_f)) - x_m||, in mm.
template <class Real>
Real tre(const std::vector<Point2<Real>>& fixed, const std::vector<Point2<Real>>& moving,
         const Tensor<Real>& disp, std::array<Real, 2> spacing) {
  if (fixed.empty() || fixed.size() != moving.size()) {
    throw ConfigError("tre needs equal, non-empty landmark lists");
  }
  const Tensor<Real> at = kernels::sample_points(disp, fixed);
  Real total = 0;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    const Real dx = (fixed[i].x + at(0, i) - moving[i].x) * spacing[0];
    const Real dy = (fixed[i].y + at(1, i) - moving[i].y) * spacing[1];
    total += std::hypot(dx, dy);
  }
  return total / static_cast<Real>(fixed.size());
}

/// Hard-label Dice averaged over foreground classes present in either map.
/// Returns 1 when no foreground class is present at all.
inline double hard_dice(const LabelMap& a, const LabelMap& b, std::size_t label_count) {
  if (a.shape() != b.shape()) throw ShapeError("hard_dice: label map shape mismatch");
  std::vector<double> inter(label_count, 0), size_a(label_count, 0), size_b(label_count, 0);
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p] < label_count) size_a[a[p]] += 1;
    if (b[p] < label_count) size_b[b[p]] += 1;
    if (a[p] == b[p] && a[p] < label_count) inter[a[p]] += 1;
  }
  double total = 0;
  std::size_t classes = 0;
  for (std::size_t c = 1; c < label_count; ++c) {
    if (size_a[c] + size_b[c] == 0) continue;
    total += 2 * inter[c] / (size_a[c] + size_b[c]);
    ++classes;
  }
  return classes == 0 ? 1.0 : total / static_cast<double>(classes);
}

}  // namespace samcl
