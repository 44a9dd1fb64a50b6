#pragma once

#include <cmath>
#include <cstddef>

#include "samcl/core/tape.hpp"

namespace samcl::ad {

namespace detail {

template <class Real>
void require_same(const Var<Real>& a, const Var<Real>& b, const char* op) {
  require_same_shape(a.value(), b.value(), op);
}

// out = f(x, y); dx = gx(x, y, out), dy = gy(x, y, out), all elementwise.
template <class Real, class F, class GX, class GY>
Var<Real> binary(Var<Real> a, Var<Real> b, const char* op, F f, GX gx, GY gy) {
  require_same(a, b, op);
  const auto& x = a.value();
  const auto& y = b.value();
  Tensor<Real> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, gx, gy](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ia);
    const auto& yv = t.value(ib);
    const auto& ov = t.value(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gx(xv[i], yv[i], ov[i]);
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * gy(xv[i], yv[i], ov[i]);
    }
  });
}

// out = f(x); dx = gx(x, out).
template <class Real, class F, class GX>
Var<Real> unary(Var<Real> a, F f, GX gx) {
  const auto& x = a.value();
  Tensor<Real> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, gx](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ia);
    const auto& ov = t.value(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gx(xv[i], ov[i]);
  });
}

}  // namespace detail

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  return detail::binary(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(1); });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  return detail::binary(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(-1); });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  return detail::binary(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real, Real y, Real) { return y; },
      [](Real x, Real, Real) { return x; });
}

template <class Real>
Var<Real> div(Var<Real> a, Var<Real> b) {
  return detail::binary(
      a, b, "div", [](Real x, Real y) { return x / y; }, [](Real, Real y, Real) { return 1 / y; },
      [](Real, Real y, Real o) { return -o / y; });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c) {
  return detail::unary(a, [c](Real x) { return c * x; }, [c](Real, Real) { return c; });
}

template <class Real>
Var<Real> add_scalar(Var<Real> a, Real c) {
  return detail::unary(a, [c](Real x) { return x + c; }, [](Real, Real) { return Real(1); });
}

template <class Real>
Var<Real> square(Var<Real> a) {
  return detail::unary(a, [](Real x) { return x * x; }, [](Real x, Real) { return 2 * x; });
}

template <class Real>
Var<Real> leaky_relu(Var<Real> a, Real slope) {
  return detail::unary(
      a, [slope](Real x) { return x > 0 ? x : slope * x; },
      [slope](Real x, Real) { return x > 0 ? Real(1) : slope; });
}

template <class Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) { return add(a, b); }
template <class Real>
Var<Real> operator-(Var<Real> a, Var<Real> b) { return sub(a, b); }
template <class Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) { return mul(a, b); }
template <class Real>
Var<Real> operator/(Var<Real> a, Var<Real> b) { return div(a, b); }

/// Sum of all elements, as a shape-[1] tensor.
template <class Real>
Var<Real> sum(Var<Real> a) {
  Real s = 0;
  for (Real v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor<Real>({1}, s), {a}, [ia](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (auto& v : t.grad(ia).values()) v += g;
  });
}

template <class Real>
Var<Real> mean(Var<Real> a) {
  const auto n = static_cast<Real>(a.value().size());
  return scale(sum(a), Real(1) / n);
}

/// [C, ...] -> [C]: sums each leading-axis slice.
template <class Real>
Var<Real> channel_sum(Var<Real> a) {
  const auto& x = a.value();
  const std::size_t channels = x.dim(0);
  const std::size_t stride = x.size() / channels;
  Tensor<Real> out({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    Real s = 0;
    for (std::size_t i = 0; i < stride; ++i) s += x[c * stride + i];
    out[c] = s;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, channels, stride](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < stride; ++i) ga[c * stride + i] += g[c];
  });
}

/// [C, N] -> [N]: sqrt(sum_c x^2 + floor^2). The floor keeps the derivative finite at 0.
template <class Real>
Var<Real> column_norm(Var<Real> a, Real floor) {
  const auto& x = a.value();
  if (x.rank() != 2) throw ShapeError("column_norm expects [C,N]");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<Real> out({cols});
  for (std::size_t n = 0; n < cols; ++n) {
    Real s = floor * floor;
    for (std::size_t c = 0; c < rows; ++c) s += x(c, n) * x(c, n);
    out[n] = std::sqrt(s);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, rows, cols](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ia);
    const auto& ov = t.value(self);
    auto& ga = t.grad(ia);
    for (std::size_t n = 0; n < cols; ++n)
      for (std::size_t c = 0; c < rows; ++c) ga[c * cols + n] += g[n] * xv[c * cols + n] / ov[n];
  });
}

}  // namespace samcl::ad
