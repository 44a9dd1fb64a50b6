#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "samcl/core/errors.hpp"
#include "samcl/core/spatial.hpp"
#include "samcl/core/tensor.hpp"

namespace samcl {

using LabelMap = Tensor<std::uint16_t>;

/// Fixed/moving images on a shared [H,W] grid, with optional annotations.
template <class Real>
struct ImagePair {
  Tensor<Real> fixed;
  Tensor<Real> moving;
  std::optional<LabelMap> fixed_labels;
  std::optional<LabelMap> moving_labels;
  std::size_t label_count = 0;  // L, including background class 0
  std::vector<Point2<Real>> fixed_landmarks;
  std::vector<Point2<Real>> moving_landmarks;
  int task_id = 0;
  // Generator ground truth, [2,H,W]; absent for externally supplied data.
  std::optional<Tensor<Real>> true_displacement;

  [[nodiscard]] std::size_t height() const { return fixed.dim(0); }
  [[nodiscard]] std::size_t width() const { return fixed.dim(1); }
  [[nodiscard]] bool has_labels() const { return fixed_labels.has_value() && moving_labels.has_value(); }
  [[nodiscard]] bool has_landmarks() const { return !fixed_landmarks.empty(); }

  friend bool operator==(const ImagePair&, const ImagePair&) = default;
};

/// Throws ShapeError / ConfigError if the pair breaks an ImagePair invariant.
template <class Real>
void validate(const ImagePair<Real>& pair) {
  if (pair.fixed.rank() != 2) throw ShapeError("image pair: fixed image must be [H,W]");
  require_same_shape(pair.fixed, pair.moving, "image pair");
  for (const auto* img : {&pair.fixed, &pair.moving}) {
    for (Real v : img->values()) {
      if (!(v >= 0 && v <= 1)) throw ConfigError("image pair: intensity outside [0,1]");
    }
  }
  if (pair.fixed_labels.has_value() != pair.moving_labels.has_value()) {
    throw ConfigError("image pair: labels must be given for both images");
  }
  if (pair.has_labels()) {
    for (const auto* lab : {&*pair.fixed_labels, &*pair.moving_labels}) {
      if (lab->shape() != pair.fixed.shape()) throw ShapeError("image pair: label map shape mismatch");
      for (auto v : lab->values()) {
        if (v >= pair.label_count) throw ConfigError("image pair: label value outside {0..L-1}");
      }
    }
  }
  if (pair.fixed_landmarks.size() != pair.moving_landmarks.size()) {
    throw ConfigError("image pair: landmark lists differ in length");
  }
}

/// One-hot encoding of the foreground classes 1..L-1 -> [L-1,H,W].
template <class Real>
Tensor<Real> one_hot_foreground(const LabelMap& labels, std::size_t label_count) {
  const std::size_t h = labels.dim(0), w = labels.dim(1);
  const std::size_t classes = label_count > 0 ? label_count - 1 : 0;
  Tensor<Real> out({classes, h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    const auto v = labels[p];
    if (v >= 1 && v < label_count) out[(v - 1) * h * w + p] = Real(1);
  }
  return out;
}

}  // namespace samcl
