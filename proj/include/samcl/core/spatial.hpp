#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "samcl/core/tape.hpp"

namespace samcl {

/// Point in pixel coordinates: x along width, y along height.
template <class Real>
struct Point2 {
  Real x{};
  Real y{};
  friend bool operator==(const Point2&, const Point2&) = default;
};

namespace kernels {

/// Out-of-grid policy for bilinear sampling: hold the border value, or evaluate the
/// border cell's bilinear polynomial at the unclamped position.
enum class Border { clamp, extrapolate };

/// Bilinear interpolation weights; the cell index is always clamped, the position
/// only under Border::clamp.
template <class Real>
struct BilinearTap {
  std::size_t x0, x1, y0, y1;
  Real wx, wy;
  bool x_clamped, y_clamped;

  BilinearTap(Real px, Real py, std::size_t height, std::size_t width, Border border = Border::clamp) {
    const Real xmax = static_cast<Real>(width - 1), ymax = static_cast<Real>(height - 1);
    const bool clamp = border == Border::clamp;
    x_clamped = clamp && (px < 0 || px > xmax);
    y_clamped = clamp && (py < 0 || py > ymax);
    const Real cx = std::clamp(px, Real(0), xmax), cy = std::clamp(py, Real(0), ymax);
    x0 = width > 1 ? std::min(static_cast<std::size_t>(cx), width - 2) : 0;
    y0 = height > 1 ? std::min(static_cast<std::size_t>(cy), height - 2) : 0;
    x1 = width > 1 ? x0 + 1 : 0;
    y1 = height > 1 ? y0 + 1 : 0;
    wx = (clamp ? cx : px) - static_cast<Real>(x0);
    wy = (clamp ? cy : py) - static_cast<Real>(y0);
  }

  [[nodiscard]] Real sample(const Real* plane, std::size_t width) const {
    const Real a = plane[y0 * width + x0], b = plane[y0 * width + x1];
    const Real c = plane[y1 * width + x0], d = plane[y1 * width + x1];
    return (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d);
  }

  // Derivatives of sample() with respect to the unclamped sampling position.
  [[nodiscard]] Real d_dx(const Real* plane, std::size_t width) const {
    if (x_clamped) return 0;
    const Real a = plane[y0 * width + x0], b = plane[y0 * width + x1];
    const Real c = plane[y1 * width + x0], d = plane[y1 * width + x1];
    return (1 - wy) * (b - a) + wy * (d - c);
  }
  [[nodiscard]] Real d_dy(const Real* plane, std::size_t width) const {
    if (y_clamped) return 0;
    const Real a = plane[y0 * width + x0], b = plane[y0 * width + x1];
    const Real c = plane[y1 * width + x0], d = plane[y1 * width + x1];
    return (1 - wx) * (c - a) + wx * (d - b);
  }

  void scatter(Real* plane, std::size_t width, Real g) const {
    plane[y0 * width + x0] += g * (1 - wy) * (1 - wx);
    plane[y0 * width + x1] += g * (1 - wy) * wx;
    plane[y1 * width + x0] += g * wy * (1 - wx);
    plane[y1 * width + x1] += g * wy * wx;
  }
};

/// out(c,y,x) = image(c, y + u_y(y,x), x + u_x(y,x)), bilinear; border clamp by default.
/// image: [C,H,W], displacement: [2,H,W] with channel 0 = x, channel 1 = y.
template <class Real>
Tensor<Real> warp_bilinear(const Tensor<Real>& image, const Tensor<Real>& disp, Border border = Border::clamp) {
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (disp.rank() != 3 || disp.dim(0) != 2 || disp.dim(1) != h || disp.dim(2) != w) {
    throw ShapeError("warp: displacement " + shape_string(disp.shape()) + " does not match image " +
                     shape_string(image.shape()));
  }
  Tensor<Real> out(image.shape());
  const std::size_t plane = h * w;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const BilinearTap<Real> tap(static_cast<Real>(x) + disp[p], static_cast<Real>(y) + disp[plane + p], h, w,
                                  border);
      for (std::size_t c = 0; c < channels; ++c) out[c * plane + p] = tap.sample(image.data() + c * plane, w);
    }
  }
  return out;
}

/// Nearest-neighbour warp of a single-channel [H,W] grid (labels or intensities).
template <class T, class Real>
Tensor<T> warp_nearest(const Tensor<T>& image, const Tensor<Real>& disp) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (disp.rank() != 3 || disp.dim(0) != 2 || disp.dim(1) != h || disp.dim(2) != w) {
    throw ShapeError("warp_nearest: displacement " + shape_string(disp.shape()) +
                     " does not match image " + shape_string(image.shape()));
  }
  Tensor<T> out(image.shape());
  const std::size_t plane = h * w;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const Real px = std::clamp(static_cast<Real>(x) + disp[p], Real(0), static_cast<Real>(w - 1));
      const Real py = std::clamp(static_cast<Real>(y) + disp[plane + p], Real(0), static_cast<Real>(h - 1));
      const auto sx = static_cast<std::size_t>(std::floor(px + Real(0.5)));
      const auto sy = static_cast<std::size_t>(std::floor(py + Real(0.5)));
      out[p] = image(std::min(sy, h - 1), std::min(sx, w - 1));
    }
  }
  return out;
}

/// Bilinear samples of a [C,H,W] field at points -> [C,N].
template <class Real>
Tensor<Real> sample_points(const Tensor<Real>& field, const std::vector<Point2<Real>>& points) {
  const std::size_t channels = field.dim(0), h = field.dim(1), w = field.dim(2);
  Tensor<Real> out({channels, points.size()});
  for (std::size_t n = 0; n < points.size(); ++n) {
    const BilinearTap<Real> tap(points[n].x, points[n].y, h, w);
    for (std::size_t c = 0; c < channels; ++c) out(c, n) = tap.sample(field.data() + c * h * w, w);
  }
  return out;
}

/// Finite difference along `axis` (0 = x, 1 = y) of each [H,W] plane: central in the
/// interior, one-sided at the two borders.
template <class Real>
Tensor<Real> spatial_gradient(const Tensor<Real>& field, int axis) {
  const std::size_t channels = field.dim(0), h = field.dim(1), w = field.dim(2);
  Tensor<Real> out(field.shape());
  const std::size_t n = axis == 0 ? w : h;
  const std::size_t step = axis == 0 ? 1 : w;
  const std::size_t lines = axis == 0 ? h : w;
  const std::size_t line_step = axis == 0 ? w : 1;
  if (n < 2) return out;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t l = 0; l < lines; ++l) {
      const Real* src = field.data() + c * h * w + l * line_step;
      Real* dst = out.data() + c * h * w + l * line_step;
      dst[0] = src[step] - src[0];
      for (std::size_t i = 1; i + 1 < n; ++i) dst[i * step] = (src[(i + 1) * step] - src[(i - 1) * step]) / 2;
      dst[(n - 1) * step] = src[(n - 1) * step] - src[(n - 2) * step];
    }
  }
  return out;
}

template <class Real>
void spatial_gradient_transpose_add(const Tensor<Real>& g, int axis, Tensor<Real>& out) {
  const std::size_t channels = g.dim(0), h = g.dim(1), w = g.dim(2);
  const std::size_t n = axis == 0 ? w : h;
  const std::size_t step = axis == 0 ? 1 : w;
  const std::size_t lines = axis == 0 ? h : w;
  const std::size_t line_step = axis == 0 ? w : 1;
  if (n < 2) return;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t l = 0; l < lines; ++l) {
      const Real* gs = g.data() + c * h * w + l * line_step;
      Real* dst = out.data() + c * h * w + l * line_step;
      dst[step] += gs[0];
      dst[0] -= gs[0];
      for (std::size_t i = 1; i + 1 < n; ++i) {
        dst[(i + 1) * step] += gs[i * step] / 2;
        dst[(i - 1) * step] -= gs[i * step] / 2;
      }
      dst[(n - 1) * step] += gs[(n - 1) * step];
      dst[(n - 2) * step] -= gs[(n - 1) * step];
    }
  }
}

/// Window sum along `axis` with replicate padding; window is odd.
template <class Real>
Tensor<Real> box_sum(const Tensor<Real>& field, int axis, std::size_t window) {
  const std::size_t channels = field.dim(0), h = field.dim(1), w = field.dim(2);
  Tensor<Real> out(field.shape());
  const std::size_t n = axis == 0 ? w : h;
  const std::size_t step = axis == 0 ? 1 : w;
  const std::size_t lines = axis == 0 ? h : w;
  const std::size_t line_step = axis == 0 ? w : 1;
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t l = 0; l < lines; ++l) {
      const Real* src = field.data() + c * h * w + l * line_step;
      Real* dst = out.data() + c * h * w + l * line_step;
      for (std::ptrdiff_t i = 0; i <= last; ++i) {
        Real s = 0;
        for (std::ptrdiff_t k = -r; k <= r; ++k) s += src[static_cast<std::size_t>(std::clamp(i + k, std::ptrdiff_t{0}, last)) * step];
        dst[static_cast<std::size_t>(i) * step] = s;
      }
    }
  }
  return out;
}

template <class Real>
void box_sum_transpose_add(const Tensor<Real>& g, int axis, std::size_t window, Tensor<Real>& out) {
  const std::size_t channels = g.dim(0), h = g.dim(1), w = g.dim(2);
  const std::size_t n = axis == 0 ? w : h;
  const std::size_t step = axis == 0 ? 1 : w;
  const std::size_t lines = axis == 0 ? h : w;
  const std::size_t line_step = axis == 0 ? w : 1;
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t l = 0; l < lines; ++l) {
      const Real* gs = g.data() + c * h * w + l * line_step;
      Real* dst = out.data() + c * h * w + l * line_step;
      for (std::ptrdiff_t i = 0; i <= last; ++i) {
        const Real gi = gs[static_cast<std::size_t>(i) * step];
        for (std::ptrdiff_t k = -r; k <= r; ++k) dst[static_cast<std::size_t>(std::clamp(i + k, std::ptrdiff_t{0}, last)) * step] += gi;
      }
    }
  }
}

}  // namespace kernels

namespace ad {

/// Differentiable bilinear warp; gradients flow to both the image and the displacement.
template <class Real>
Var<Real> warp(Var<Real> image, Var<Real> disp, kernels::Border border = kernels::Border::clamp) {
  Tensor<Real> out = kernels::warp_bilinear(image.value(), disp.value(), border);
  const std::size_t ii = image.id(), id = disp.id();
  return image.tape().record(std::move(out), {image, disp}, [ii, id, border](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& img = t.value(ii);
    const auto& u = t.value(id);
    const std::size_t channels = img.dim(0), h = img.dim(1), w = img.dim(2), plane = h * w;
    const bool want_img = t.requires_grad(ii), want_u = t.requires_grad(id);
    // Both grads may alias one node (u warped by itself); fetch pointers once.
    Real* gi = want_img ? t.grad(ii).data() : nullptr;
    Real* gu = want_u ? t.grad(id).data() : nullptr;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        const kernels::BilinearTap<Real> tap(static_cast<Real>(x) + u[p], static_cast<Real>(y) + u[plane + p], h, w,
                                             border);
        Real dx = 0, dy = 0;
        for (std::size_t c = 0; c < channels; ++c) {
          const Real gc = g[c * plane + p];
          if (gc == Real(0)) continue;
          const Real* src = img.data() + c * plane;
          if (want_u) {
            dx += gc * tap.d_dx(src, w);
            dy += gc * tap.d_dy(src, w);
          }
          if (want_img) tap.scatter(gi + c * plane, w, gc);
        }
        if (want_u) {
          gu[p] += dx;
          gu[plane + p] += dy;
        }
      }
    }
  });
}

/// Bilinear samples of a [C,H,W] field at fixed points -> [C,N]; differentiable in the field.
template <class Real>
Var<Real> sample_points(Var<Real> field, std::vector<Point2<Real>> points) {
  Tensor<Real> out = kernels::sample_points(field.value(), points);
  const std::size_t id = field.id();
  return field.tape().record(std::move(out), {field}, [id, points = std::move(points)](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gf = t.grad(id);
    const std::size_t channels = gf.dim(0), h = gf.dim(1), w = gf.dim(2);
    for (std::size_t n = 0; n < points.size(); ++n) {
      const kernels::BilinearTap<Real> tap(points[n].x, points[n].y, h, w);
      for (std::size_t c = 0; c < channels; ++c) tap.scatter(gf.data() + c * h * w, w, g[c * points.size() + n]);
    }
  });
}

template <class Real>
Var<Real> spatial_gradient(Var<Real> field, int axis) {
  Tensor<Real> out = kernels::spatial_gradient(field.value(), axis);
  const std::size_t id = field.id();
  return field.tape().record(std::move(out), {field}, [id, axis](Tape<Real>& t, std::size_t self) {
    kernels::spatial_gradient_transpose_add(t.grad(self), axis, t.grad(id));
  });
}

/// Separable window mean with replicate padding.
template <class Real>
Var<Real> box_mean(Var<Real> field, std::size_t window) {
  Tensor<Real> out = kernels::box_sum(kernels::box_sum(field.value(), 0, window), 1, window);
  const Real inv = Real(1) / static_cast<Real>(window * window);
  for (auto& v : out.values()) v *= inv;
  const std::size_t id = field.id();
  return field.tape().record(std::move(out), {field}, [id, window, inv](Tape<Real>& t, std::size_t self) {
    Tensor<Real> g = t.grad(self);
    for (auto& v : g.values()) v *= inv;
    Tensor<Real> mid(g.shape());
    kernels::box_sum_transpose_add(g, 1, window, mid);
    kernels::box_sum_transpose_add(mid, 0, window, t.grad(id));
  });
}

}  // namespace ad
}  // namespace samcl
