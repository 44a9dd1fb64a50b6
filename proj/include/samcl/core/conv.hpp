#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "samcl/core/tape.hpp"

namespace samcl::ad {

namespace detail {

template <class Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t in_channels, height, width, kernel, stride, pad, out_height, out_width;
  [[nodiscard]] std::size_t patch() const { return in_channels * kernel * kernel; }
  [[nodiscard]] std::size_t pixels() const { return out_height * out_width; }
};

template <class Real>
void im2col(const Real* x, const ConvGeometry& g, Real* cols) {
  const std::size_t n = g.pixels();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const Real* plane = x + ci * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        Real* row = cols + ((ci * g.kernel + ky) * g.kernel + kx) * n;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          Real* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) dst[ox] = Real(0);
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? Real(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <class Real>
void col2im_add(const Real* cols, const ConvGeometry& g, Real* x) {
  const std::size_t n = g.pixels();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    Real* plane = x + ci * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const Real* row = cols + ((ci * g.kernel + ky) * g.kernel + kx) * n;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          Real* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const Real* src = row + oy * g.out_width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width))
              dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

namespace detail {

// Stride-1 convolution without im2col: the input is zero-padded once, and each kernel
// tap becomes a GEMM against a shifted view of the padded planes. Output columns are
// laid out on the padded row pitch; the 2*pad trailing columns of each row are junk.
template <class Real>
Var<Real> conv2d_shifted(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  using Mat = RowMatrix<Real>;
  using View = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
  using MutView = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t cout = wv.dim(0), k = wv.dim(2), pad = k / 2;
  const std::size_t pitch = w + 2 * pad, plane = (h + 2 * pad) * pitch, cols = h * pitch;
  const auto taps = k * k;

  auto padded = std::make_shared<std::vector<Real>>(cin * plane + 2 * pad, Real(0));
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(xv.data() + (c * h + y) * w, w, padded->data() + c * plane + (y + pad) * pitch + pad);

  // Per-tap weight matrices [cout, cin].
  auto tap_weights = std::make_shared<std::vector<Mat>>(taps, Mat(cout, cin));
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t t = 0; t < taps; ++t) (*tap_weights)[t](o, c) = wv[(o * cin + c) * taps + t];

  Mat acc = Mat::Zero(cout, cols);
  for (std::size_t t = 0; t < taps; ++t) {
    const std::size_t offset = (t / k) * pitch + t % k;
    View view(padded->data() + offset, cin, cols, Eigen::OuterStride<>(plane));
    acc.noalias() += (*tap_weights)[t] * view;
  }
  Tensor<Real> out({cout, h, w});
  const auto& bv = bias.value();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w; ++i) out(o, y, i) = acc(o, y * pitch + i) + bv[o];

  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [ix, iw, ib, cin, h, w, cout, k, pad, pitch, plane, cols, taps, padded, tap_weights](Tape<Real>& tp, std::size_t self) {
        const auto& gy = tp.grad(self);
        Mat g = Mat::Zero(cout, cols);
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t i = 0; i < w; ++i) g(o, y * pitch + i) = gy(o, y, i);
        if (tp.requires_grad(ib)) {
          auto& gb = tp.grad(ib);
          for (std::size_t o = 0; o < cout; ++o) {
            Real acc = 0;
            for (std::size_t p = 0; p < h * w; ++p) acc += gy[o * h * w + p];
            gb[o] += acc;
          }
        }
        const bool want_w = tp.requires_grad(iw), want_x = tp.requires_grad(ix);
        std::vector<Real> gpad(want_x ? cin * plane + 2 * pad : 0, Real(0));
        Mat gw_tap(cout, cin);
        for (std::size_t t = 0; t < taps; ++t) {
          const std::size_t offset = (t / k) * pitch + t % k;
          if (want_w) {
            View view(padded->data() + offset, cin, cols, Eigen::OuterStride<>(plane));
            gw_tap.noalias() = g * view.transpose();
            auto& gw = tp.grad(iw);
            for (std::size_t o = 0; o < cout; ++o)
              for (std::size_t c = 0; c < cin; ++c) gw[(o * cin + c) * taps + t] += gw_tap(o, c);
          }
          if (want_x) {
            MutView target(gpad.data() + offset, cin, cols, Eigen::OuterStride<>(plane));
            target.noalias() += (*tap_weights)[t].transpose() * g;
          }
        }
        if (want_x) {
          auto& gx = tp.grad(ix);
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t i = 0; i < w; ++i) gx(c, y, i) += gpad[c * plane + (y + pad) * pitch + pad + i];
        }
      });
}

}  // namespace detail

/// 2-D convolution of one sample. x: [Cin,H,W], weight: [Cout,Cin,k,k], bias: [Cout].
/// Zero padding of k/2, so stride 1 preserves the grid and stride 2 halves it.
template <class Real>
Var<Real> conv2d(Var<Real> x, Var<Real> weight, Var<Real> bias, std::size_t stride) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3) ||
      wv.dim(2) % 2 == 0 || bias.value().size() != wv.dim(0) || stride == 0) {
    throw ShapeError("conv2d: incompatible input " + shape_string(xv.shape()) + " and weight " +
                     shape_string(wv.shape()));
  }
  if (stride == 1) return detail::conv2d_shifted(x, weight, bias);

  detail::ConvGeometry g{};
  g.in_channels = xv.dim(0);
  g.height = xv.dim(1);
  g.width = xv.dim(2);
  g.kernel = wv.dim(2);
  g.stride = stride;
  g.pad = g.kernel / 2;
  g.out_height = (g.height + 2 * g.pad - g.kernel) / stride + 1;
  g.out_width = (g.width + 2 * g.pad - g.kernel) / stride + 1;
  const std::size_t out_channels = wv.dim(0);

  auto cols = std::make_shared<std::vector<Real>>(g.patch() * g.pixels());
  detail::im2col(xv.data(), g, cols->data());

  using Mat = detail::RowMatrix<Real>;
  Tensor<Real> out({out_channels, g.out_height, g.out_width});
  Eigen::Map<const Mat> w_mat(wv.data(), out_channels, g.patch());
  Eigen::Map<const Mat> c_mat(cols->data(), g.patch(), g.pixels());
  Eigen::Map<Mat> o_mat(out.data(), out_channels, g.pixels());
  o_mat.noalias() = w_mat * c_mat;
  const auto& bv = bias.value();
  for (std::size_t c = 0; c < out_channels; ++c) o_mat.row(c).array() += bv[c];

  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [ix, iw, ib, g, out_channels, cols](Tape<Real>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        Eigen::Map<const Mat> gy_mat(gy.data(), out_channels, g.pixels());
        Eigen::Map<const Mat> c_mat(cols->data(), g.patch(), g.pixels());
        if (t.requires_grad(iw)) {
          Eigen::Map<Mat> gw(t.grad(iw).data(), out_channels, g.patch());
          gw.noalias() += gy_mat * c_mat.transpose();
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad(ib);
          for (std::size_t c = 0; c < out_channels; ++c) {
            Real acc = 0;
            for (std::size_t p = 0; p < g.pixels(); ++p) acc += gy[c * g.pixels() + p];
            gb[c] += acc;
          }
        }
        if (t.requires_grad(ix)) {
          Eigen::Map<const Mat> w_mat(t.value(iw).data(), out_channels, g.patch());
          Mat gcols = w_mat.transpose() * gy_mat;
          detail::col2im_add(gcols.data(), g, t.grad(ix).data());
        }
      });
}

/// [C,H,W] -> [C,2H,2W], nearest neighbour.
template <class Real>
Var<Real> upsample2x(Var<Real> x) {
  const auto& xv = x.value();
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Tensor<Real> out({c, 2 * h, 2 * w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t i = 0; i < 2 * w; ++i) out(k, y, i) = xv(k, y / 2, i / 2);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, c, h, w](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t i = 0; i < 2 * w; ++i) gx(k, y / 2, i / 2) += g(k, y, i);
  });
}

/// Concatenates [Ca,H,W] and [Cb,H,W] along the channel axis.
template <class Real>
Var<Real> concat_channels(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
    throw ShapeError("concat_channels: " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  Tensor<Real> out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.values().begin(), av.values().end(), out.values().begin());
  std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + av.size());
  const std::size_t ia = a.id(), ib = b.id(), na = av.size(), nb = bv.size();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, na, nb](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
    }
  });
}

}  // namespace samcl::ad
