#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "samcl/core/conv.hpp"
#include "samcl/core/ops.hpp"
#include "samcl/core/optim.hpp"

namespace samcl {

/// Shape of the velocity-predicting encoder/decoder.
struct Architecture {
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<std::size_t> encoder{16, 32, 32};  // stride-2 convs
  std::vector<std::size_t> decoder{32, 32, 16};  // upsample + skip concat + conv
  std::size_t kernel = 3;
  double leaky_slope = 0.2;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ConvLayer {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t weight_offset;
  std::size_t bias_offset;

  [[nodiscard]] std::size_t weight_count() const { return out_channels * in_channels * kernel * kernel; }
};

/// U-Net style network g(f, m; theta) -> velocity [2,H,W]. Holds the layer layout
/// only; parameters live in a separate ParameterVector.
class Network {
 public:
  Network() : Network(Architecture{}) {}

  explicit Network(Architecture arch) : arch_(std::move(arch)) {
    const std::size_t depth = arch_.encoder.size();
    if (depth == 0 || arch_.decoder.size() != depth) {
      throw ConfigError("network: decoder must have as many levels as the encoder");
    }
    if (arch_.kernel % 2 == 0) throw ConfigError("network: kernel must be odd");
    const std::size_t factor = std::size_t{1} << depth;
    if (arch_.height % factor != 0 || arch_.width % factor != 0) {
      throw ConfigError("network: grid " + std::to_string(arch_.height) + "x" + std::to_string(arch_.width) +
                        " must be divisible by " + std::to_string(factor));
    }
    std::size_t channels = 2;
    for (std::size_t c : arch_.encoder) {
      add_layer(channels, c, 2);
      channels = c;
    }
    for (std::size_t j = 0; j < depth; ++j) {
      const std::size_t skip = j + 1 < depth ? arch_.encoder[depth - 2 - j] : 2;
      add_layer(channels + skip, arch_.decoder[j], 1);
      channels = arch_.decoder[j];
    }
    add_layer(channels, 2, 1);
  }

  [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
  [[nodiscard]] const std::vector<ConvLayer>& layers() const noexcept { return layers_; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return count_; }

  /// He-normal weights, zero biases, zero output head (identity transform at start).
  template <class Real>
  [[nodiscard]] ParameterVector<Real> initial_parameters(std::uint64_t seed) const {
    ParameterVector<Real> params(count_);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.in_channels * layer.kernel * layer.kernel)));
      for (std::size_t i = 0; i < layer.weight_count(); ++i) params[layer.weight_offset + i] = static_cast<Real>(dist(rng));
    }
    return params;
  }

  /// Parameter leaves bound on a tape: weights and biases per layer.
  template <class Real>
  struct Bound {
    std::vector<ad::Var<Real>> weights;
    std::vector<ad::Var<Real>> biases;
  };

  template <class Real>
  Bound<Real> bind(ad::Tape<Real>& tape, const ParameterVector<Real>& params, bool requires_grad) const {
    if (params.size() != count_) {
      throw ShapeError("network: expected " + std::to_string(count_) + " parameters, got " +
                       std::to_string(params.size()));
    }
    Bound<Real> bound;
    for (const auto& layer : layers_) {
      const auto* w = params.values().data() + layer.weight_offset;
      const auto* b = params.values().data() + layer.bias_offset;
      bound.weights.push_back(tape.leaf(
          Tensor<Real>({layer.out_channels, layer.in_channels, layer.kernel, layer.kernel},
                       std::vector<Real>(w, w + layer.weight_count())),
          requires_grad));
      bound.biases.push_back(tape.leaf(
          Tensor<Real>({layer.out_channels}, std::vector<Real>(b, b + layer.out_channels)), requires_grad));
    }
    return bound;
  }

  /// Adds the gradients of the bound leaves into `grad` (flat layout).
  template <class Real>
  void accumulate_gradient(ad::Tape<Real>& tape, const Bound<Real>& bound, GradientVector<Real>& grad) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (tape.has_grad(bound.weights[l].id())) {
        const auto& gw = tape.grad(bound.weights[l].id());
        for (std::size_t i = 0; i < gw.size(); ++i) grad[layer.weight_offset + i] += gw[i];
      }
      if (tape.has_grad(bound.biases[l].id())) {
        const auto& gb = tape.grad(bound.biases[l].id());
        for (std::size_t i = 0; i < gb.size(); ++i) grad[layer.bias_offset + i] += gb[i];
      }
    }
  }

  /// Velocity field [2,H,W] for the [H,W] pair (fixed, moving).
  template <class Real>
  ad::Var<Real> forward(ad::Tape<Real>& tape, const Bound<Real>& bound, const Tensor<Real>& fixed,
                        const Tensor<Real>& moving) const {
    if (fixed.rank() != 2 || fixed.dim(0) != arch_.height || fixed.dim(1) != arch_.width ||
        moving.shape() != fixed.shape()) {
      throw ShapeError("network: expected " + std::to_string(arch_.height) + "x" + std::to_string(arch_.width) +
                       " images, got " + shape_string(fixed.shape()) + " / " + shape_string(moving.shape()));
    }
    const Shape plane{1, arch_.height, arch_.width};
    auto input = ad::concat_channels(tape.constant(fixed.reshaped(plane)), tape.constant(moving.reshaped(plane)));
    const auto slope = static_cast<Real>(arch_.leaky_slope);
    const std::size_t depth = arch_.encoder.size();

    std::vector<ad::Var<Real>> skips{input};
    ad::Var<Real> x = input;
    std::size_t l = 0;
    for (; l < depth; ++l) {
      x = ad::leaky_relu(ad::conv2d(x, bound.weights[l], bound.biases[l], 2), slope);
      skips.push_back(x);
    }
    for (std::size_t j = 0; j < depth; ++j, ++l) {
      auto up = ad::concat_channels(ad::upsample2x(x), skips[depth - 1 - j]);
      x = ad::leaky_relu(ad::conv2d(up, bound.weights[l], bound.biases[l], 1), slope);
    }
    return ad::conv2d(x, bound.weights[l], bound.biases[l], 1);
  }

 private:
  void add_layer(std::size_t in, std::size_t out, std::size_t stride) {
    ConvLayer layer{in, out, arch_.kernel, stride, count_, 0};
    count_ += layer.weight_count();
    layer.bias_offset = count_;
    count_ += out;
    layers_.push_back(layer);
  }

  Architecture arch_;
  std::vector<ConvLayer> layers_;
  std::size_t count_ = 0;
};

}  // namespace samcl
