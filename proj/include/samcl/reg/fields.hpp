#pragma once

#include <cmath>
#include <stdexcept>

#include "samcl/core/ops.hpp"
#include "samcl/core/spatial.hpp"

namespace samcl {

enum class Interpolation { bilinear, nearest };

/// Scaling and squaring: u = v / 2^n, then n self-compositions u <- u + u o (id + u).
/// Displacement fields are resampled with linear extrapolation past the grid.
template <class Real>
Tensor<Real> exponentiate(const Tensor<Real>& velocity, int n_squarings) {
  if (n_squarings < 0) throw ConfigError("exponentiate: n_squarings must be >= 0");
  Tensor<Real> u = velocity;
  const Real s = std::ldexp(Real(1), -n_squarings);
  for (auto& x : u.values()) x *= s;
  for (int i = 0; i < n_squarings; ++i) {
    const Tensor<Real> moved = kernels::warp_bilinear(u, u, kernels::Border::extrapolate);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += moved[k];
  }
  return u;
}

/// Displacement of (id + first) o (id + second).
template <class Real>
Tensor<Real> compose(const Tensor<Real>& first, const Tensor<Real>& second) {
  Tensor<Real> out = kernels::warp_bilinear(first, second, kernels::Border::extrapolate);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += second[k];
  return out;
}

/// output(x) = image(x + u(x)) for an [H,W] image.
template <class Real>
Tensor<Real> warp(const Tensor<Real>& image, const Tensor<Real>& disp, Interpolation mode) {
  if (image.rank() != 2) throw ShapeError("warp: image must be [H,W]");
  if (mode == Interpolation::nearest) return kernels::warp_nearest(image, disp);
  const Tensor<Real> stacked = image.reshaped({1, image.dim(0), image.dim(1)});
  return kernels::warp_bilinear(stacked, disp).reshaped(image.shape());
}

/// Max displacement magnitude of exp(v) o exp(-v): 0 for an exact inverse pair.
template <class Real>
Real inverse_consistency_error(const Tensor<Real>& velocity, int n_squarings) {
  Tensor<Real> negated = velocity;
  for (auto& x : negated.values()) x = -x;
  const Tensor<Real> residual = compose(exponentiate(velocity, n_squarings), exponentiate(negated, n_squarings));
  const std::size_t plane = residual.dim(1) * residual.dim(2);
  Real worst = 0;
  for (std::size_t p = 0; p < plane; ++p) worst = std::max(worst, std::hypot(residual[p], residual[plane + p]));
  return worst;
}

namespace ad {

template <class Real>
Var<Real> exponentiate(Var<Real> velocity, int n_squarings) {
  Var<Real> u = scale(velocity, std::ldexp(Real(1), -n_squarings));
  for (int i = 0; i < n_squarings; ++i) u = add(u, warp(u, u, kernels::Border::extrapolate));
  return u;
}

}  // namespace ad
}  // namespace samcl
