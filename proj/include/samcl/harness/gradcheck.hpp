#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "samcl/reg/losses.hpp"
#include "samcl/reg/objective.hpp"

namespace samcl {

struct GradcheckResult {
  std::string name;
  double max_relative_error = 0;
  std::size_t skipped = 0;  // coordinates replaced because their stencil straddled a kink
};

/// Max relative error between the tape gradient of `build(x)` and central differences,
/// over `n_coords` random coordinates of x.
inline double tape_gradcheck(const Tensor<double>& x0,
                             const std::function<ad::Var<double>(ad::Tape<double>&, ad::Var<double>)>& build,
                             std::size_t n_coords, double step, std::uint64_t seed,
                             std::size_t* skipped = nullptr) {
  ad::Tape<double> tape;
  auto x = tape.leaf(x0);
  auto out = build(tape, x);
  tape.backward(out);
  const auto analytic = tape.grad(x.id()).storage();
  const auto value = [&](const std::vector<double>& point) {
    ad::Tape<double> t;
    return build(t, t.constant(Tensor<double>(x0.shape(), point))).item();
  };
  return check_gradient<double>(x0.storage(), analytic, value, n_coords, step, seed, skipped);
}

namespace gradcheck_detail {

inline Tensor<double> smooth_image(std::mt19937_64& rng, std::size_t channels, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> phase(0, 6.283185307179586), freq(0.2, 0.7);
  Tensor<double> out({channels, h, w});
  for (std::size_t c = 0; c < channels; ++c) {
    const double a = freq(rng), b = freq(rng), p = phase(rng), q = phase(rng);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out[(c * h + y) * w + x] = 0.5 + 0.25 * std::sin(a * double(x) + p) * std::cos(b * double(y) + q);
      }
    }
  }
  return out;
}

inline Tensor<double> random_field(std::mt19937_64& rng, std::size_t h, std::size_t w, double amplitude) {
  auto f = smooth_image(rng, 2, h, w);
  for (auto& v : f.values()) v = amplitude * (v - 0.5) * 4.0;
  return f;
}

}  // namespace gradcheck_detail

/// Finite-difference checks of every loss term and of the full objective on a 16x16
/// grid in double precision.
inline std::vector<GradcheckResult> run_gradchecks(std::uint64_t seed = 11, std::size_t n_coords = 40) {
  using namespace gradcheck_detail;
  constexpr std::size_t h = 16, w = 16;
  const double step = 1e-5;
  std::mt19937_64 rng(seed);
  std::vector<GradcheckResult> out;
  std::size_t skipped = 0;

  const auto fixed_img = smooth_image(rng, 1, h, w);
  out.push_back({"lncc", tape_gradcheck(smooth_image(rng, 1, h, w),
                                        [&](ad::Tape<double>& t, ad::Var<double> g) {
                                          return ad::lncc(t.constant(fixed_img), g, 3);
                                        },
                                        n_coords, step, seed, &skipped), skipped});

  auto p = smooth_image(rng, 3, h, w);
  out.push_back({"soft_dice", tape_gradcheck(smooth_image(rng, 3, h, w),
                                             [&](ad::Tape<double>& t, ad::Var<double> q) {
                                               return ad::soft_dice(t.constant(p), q);
                                             },
                                             n_coords, step, seed, &skipped), skipped});

  std::uniform_real_distribution<double> coord(2.3, 12.7);
  std::vector<Point2<double>> fixed_pts, moving_pts;
  for (int k = 0; k < 6; ++k) {
    fixed_pts.push_back({coord(rng), coord(rng)});
    moving_pts.push_back({coord(rng), coord(rng)});
  }
  out.push_back({"tre", tape_gradcheck(random_field(rng, h, w, 1.3),
                                       [&](ad::Tape<double>&, ad::Var<double> u) {
                                         return ad::landmark_distance(u, fixed_pts, moving_pts, {1.0, 1.0});
                                       },
                                       n_coords, step, seed, &skipped), skipped});
  out.push_back({"membrane", tape_gradcheck(random_field(rng, h, w, 1.0),
                                            [](ad::Tape<double>&, ad::Var<double> v) { return ad::membrane_energy(v); },
                                            n_coords, step, seed, &skipped), skipped});
  out.push_back({"bending", tape_gradcheck(random_field(rng, h, w, 1.0),
                                           [](ad::Tape<double>&, ad::Var<double> v) { return ad::bending_energy(v); },
                                           n_coords, step, seed, &skipped), skipped});
  const auto moving_img = smooth_image(rng, 1, h, w);
  out.push_back({"warp_exp", tape_gradcheck(random_field(rng, h, w, 1.2),
                                            [&](ad::Tape<double>& t, ad::Var<double> v) {
                                              auto warped = ad::warp(t.constant(moving_img), ad::exponentiate(v, 7));
                                              return ad::sum(ad::square(warped - t.constant(fixed_img)));
                                            },
                                            n_coords, step, seed, &skipped), skipped});

  // Full objective through the network, with a perturbed output head so v != 0.
  Architecture arch;
  arch.height = h;
  arch.width = w;
  arch.encoder = {4, 8, 8};
  arch.decoder = {8, 8, 4};
  const RegistrationModel model{Network(arch), true, 7};
  auto params = model.network.initial_parameters<double>(seed);
  std::normal_distribution<double> head(0.0, 0.5);
  const auto& last = model.network.layers().back();
  for (std::size_t i = 0; i < last.weight_count(); ++i) params[last.weight_offset + i] = head(rng);

  ImagePair<double> pair;
  pair.fixed = fixed_img.reshaped({h, w});
  pair.moving = moving_img.reshaped({h, w});
  pair.label_count = 3;
  LabelMap fl({h, w}), ml({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      fl(y, x) = static_cast<std::uint16_t>((x > 5 && x < 11) + 2 * (y > 9));
      ml(y, x) = static_cast<std::uint16_t>((x > 6 && x < 12) + 2 * (y > 8));
    }
  }
  pair.fixed_labels = fl;
  pair.moving_labels = ml;
  pair.fixed_landmarks = fixed_pts;
  pair.moving_landmarks = moving_pts;
  for (auto [name, kind] : {std::pair{"composite_lncc_dice", Dissimilarity::lncc_plus_dice},
                            std::pair{"composite_lncc_tre", Dissimilarity::lncc_plus_tre}}) {
    LossSpec spec;
    spec.dissimilarity = kind;
    const Sample<double> sample{&pair, &spec};
    out.push_back({name, gradient_check(model, params, std::span<const Sample<double>>(&sample, 1), n_coords, step, seed, &skipped), skipped});
  }
  return out;
}

}  // namespace samcl
