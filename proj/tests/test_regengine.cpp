#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "samcl/harness/gradcheck.hpp"
#include "samcl/reg/fields.hpp"
#include "samcl/reg/losses.hpp"
#include "samcl/reg/objective.hpp"
#include "samcl/taskgen/generator.hpp"
#include "test_support.hpp"

using namespace samcl;
namespace oracle = samcl::testing::oracle;
using samcl::testing::image_f;
using samcl::testing::image_g;

namespace {

RegistrationModel model_for(std::size_t n) {
  Architecture a;
  a.height = n;
  a.width = n;
  return RegistrationModel{Network(a), true, 7};
}

ImagePair<double> blob_pair(std::size_t n, double shift) {
  ImagePair<double> p;
  p.fixed = Tensor<double>({n, n});
  p.moving = Tensor<double>({n, n});
  const double c = double(n - 1) / 2;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double rf = std::hypot(double(x) - c, double(y) - c);
      const double rm = std::hypot(double(x) - c - shift, double(y) - c);
      p.fixed(y, x) = 1.0 / (1.0 + std::exp((rf - n / 4.0) / 1.5));
      p.moving(y, x) = 1.0 / (1.0 + std::exp((rm - n / 4.0) / 1.5));
    }
  return p;
}

Tensor<double> smooth_velocity(std::mt19937_64& rng, std::size_t n, double peak) {
  TaskSpec spec;
  spec.name = "v";
  spec.height = spec.width = n;
  spec.deformation = peak;
  return random_velocity(spec, rng);
}

/// Smooth bump: 0 within 4 px of the edge, 1 from 12 px inwards.
double border_window(std::size_t i) {
  const double d = std::min(double(i), 63.0 - double(i));
  const double t = std::clamp((d - 4.0) / 8.0, 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

double interior_max(const Tensor<double>& field, std::size_t margin) {
  const std::size_t h = field.dim(1), w = field.dim(2);
  double worst = 0;
  for (std::size_t y = margin; y + margin < h; ++y)
    for (std::size_t x = margin; x + margin < w; ++x) worst = std::max(worst, std::hypot(field(0, y, x), field(1, y, x)));
  return worst;
}

}  // namespace

TEST(PredictVelocity, ZeroHeadGivesZeroField) {
  const auto model = model_for(32);
  const auto v = predict_velocity(model, model.network.initial_parameters<double>(3), blob_pair(32, 2));
  EXPECT_EQ(v.max_abs(), 0.0);
  EXPECT_EQ(v.shape(), (Shape{2, 32, 32}));
}

TEST(PredictVelocity, Deterministic) {
  const auto model = model_for(32);
  auto params = model.network.initial_parameters<double>(3);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += 1e-3 * std::sin(double(i));
  const auto pair = blob_pair(32, 2);
  EXPECT_TRUE(predict_velocity(model, params, pair) == predict_velocity(model, params, pair));
}

TEST(PredictVelocity, GridMismatchIsAShapeError) {
  const auto model = model_for(32);
  EXPECT_THROW(predict_velocity(model, model.network.initial_parameters<double>(1), blob_pair(16, 1)), ShapeError);
}

TEST(Exponentiate, ZeroFieldIsIdentity) {
  const Tensor<double> zero({2, 64, 64});
  EXPECT_EQ(exponentiate(zero, 7).max_abs(), 0.0);
}

TEST(Exponentiate, ConstantFieldIntegratesToTranslation) {
  Tensor<double> v({2, 64, 64});
  for (std::size_t p = 0; p < 64 * 64; ++p) v[p] = 1.5;
  const auto u = exponentiate(v, 7);
  double worst = 0;
  for (std::size_t y = 8; y < 56; ++y)
    for (std::size_t x = 8; x < 56; ++x) {
      worst = std::max(worst, std::abs(u(0, y, x) - 1.5));
      worst = std::max(worst, std::abs(u(1, y, x)));
    }
  EXPECT_LT(worst, 0.01);
}

TEST(Exponentiate, MatchesReferenceIntegrator) {
  EXPECT_NEAR(samcl::testing::checksum(exponentiate(samcl::testing::velocity16(), 7)), oracle::exp_checksum, 1e-10);
}

TEST(Exponentiate, InverseConsistencyForFieldsVanishingAtTheBorder) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = smooth_velocity(rng, 64, 2.0);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x) v(c, y, x) *= border_window(y) * border_window(x);
    const double peak = v.max_abs();
    for (auto& e : v.values()) e *= 2.0 / peak;
    EXPECT_LT(inverse_consistency_error(v, 7), 0.1) << "trial " << trial;
  }
}

TEST(Exponentiate, InverseConsistencyOnTheFullGrid) {
  std::mt19937_64 rng(2025);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = smooth_velocity(rng, 64, 2.0);
    EXPECT_LE(v.max_abs(), 2.0 + 1e-12);
    auto negated = v;
    for (auto& e : negated.values()) e = -e;
    const auto residual = compose(exponentiate(v, 7), exponentiate(negated, 7));
    EXPECT_LT(interior_max(residual, 0), 0.1) << "trial " << trial;
    EXPECT_NEAR(inverse_consistency_error(v, 7), interior_max(residual, 0), 1e-15);
  }
}

TEST(Exponentiate, ConstantFieldIsExactUpToTheBorder) {
  Tensor<double> v({2, 16, 16});
  for (std::size_t p = 0; p < 256; ++p) {
    v[p] = 1.5;
    v[256 + p] = -0.75;
  }
  const auto u = exponentiate(v, 7);
  for (std::size_t p = 0; p < 256; ++p) {
    EXPECT_NEAR(u[p], 1.5, 1e-12);
    EXPECT_NEAR(u[256 + p], -0.75, 1e-12);
  }
}

TEST(Exponentiate, ResamplingContinuesAffineFieldsPastTheGrid) {
  Tensor<double> field({2, 6, 6}), disp({2, 6, 6});
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      field(0, y, x) = 0.5 * double(x) - 0.25 * double(y) + 1;
      field(1, y, x) = 2.0 * double(y);
      disp(0, y, x) = x < 3 ? -4.5 : 3.25;
      disp(1, y, x) = y < 3 ? -2.0 : 5.5;
    }
  const auto out = kernels::warp_bilinear(field, disp, kernels::Border::extrapolate);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      const double px = double(x) + disp(0, y, x), py = double(y) + disp(1, y, x);
      EXPECT_NEAR(out(0, y, x), 0.5 * px - 0.25 * py + 1, 1e-12);
      EXPECT_NEAR(out(1, y, x), 2.0 * py, 1e-12);
    }
  const auto clamped = kernels::warp_bilinear(field, disp);
  EXPECT_EQ(clamped(1, 0, 0), 0.0);
}

TEST(Warp, ZeroDisplacementIsExact) {
  const auto img = image_f(8, 8);
  const Tensor<double> zero({2, 8, 8});
  EXPECT_TRUE(warp(img, zero, Interpolation::bilinear) == img);
  EXPECT_TRUE(warp(img, zero, Interpolation::nearest) == img);
}

TEST(Warp, IntegerShiftNearestClampsAtBorder) {
  const auto img = image_f(8, 8);
  Tensor<double> u({2, 8, 8});
  for (std::size_t p = 0; p < 64; ++p) u[p] = 3;
  const auto out = warp(img, u, Interpolation::nearest);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(out(y, x), img(y, std::min<std::size_t>(x + 3, 7)));
}

TEST(Warp, BilinearMatchesReferenceSampler) {
  const auto out = warp(image_f(8, 8), samcl::testing::warp_field(8, 8), Interpolation::bilinear);
  EXPECT_NEAR(samcl::testing::checksum(out), oracle::warp_checksum, 1e-11);
}

TEST(Lncc, MatchesReference) {
  EXPECT_NEAR(lncc(image_f(8, 8), image_g(8, 8), 3), oracle::lncc_f_g_w3, 1e-13);
  EXPECT_NEAR(lncc(image_f(8, 8), image_g(8, 8), 5), oracle::lncc_f_g_w5, 1e-13);
}

TEST(Lncc, SelfSimilarity) {
  const auto f = samcl::testing::contrast_image(16, 16);
  EXPECT_GE(lncc(f, f, 3), 0.999);
}

TEST(Lncc, LowContrastIsDampedByEpsilon) {
  const auto f = image_f(16, 16);
  EXPECT_LT(lncc(f, f, 3), 0.999);
  EXPECT_GT(lncc(f, f, 3), 0.9);
}

TEST(Lncc, AffineIntensityInvariance) {
  const auto f = samcl::testing::contrast_image(16, 16);
  for (const auto [scale, shift] : {std::pair{2.0, -0.5}, std::pair{0.5, 0.3}, std::pair{1.0, 0.25}}) {
    auto g = f;
    for (auto& v : g.values()) v = scale * v + shift;
    EXPECT_GE(lncc(f, g, 3), 0.999) << scale;
    EXPECT_NEAR(lncc(f, g, 3), lncc(f, f, 3), 1e-3) << scale;
  }
}

TEST(Lncc, ConstantImageGivesZero) {
  const Tensor<double> flat({16, 16}, 0.5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0, 1);
  Tensor<double> g({16, 16});
  for (auto& v : g.values()) v = d(rng);
  EXPECT_NEAR(lncc(flat, g, 3), 0.0, 1e-9);
}

TEST(Lncc, EvenWindowRejected) { EXPECT_THROW(lncc(image_f(8, 8), image_f(8, 8), 2), ConfigError); }

TEST(SoftDice, IdenticalDisjointAndPartialOverlap) {
  Tensor<double> a({1, 4, 4}), b({1, 4, 4}), c({1, 4, 4});
  for (std::size_t x = 0; x < 4; ++x) {
    a(0, 0, x) = 1;
    c(0, 3, x) = 1;
  }
  b(0, 0, 2) = b(0, 0, 3) = b(0, 1, 0) = b(0, 1, 1) = 1;
  EXPECT_NEAR(soft_dice(a, a), 1.0, 1e-5);
  EXPECT_NEAR(soft_dice(a, c), 0.0, 1e-12);
  EXPECT_NEAR(soft_dice(a, b), 0.5, 1e-5);
  EXPECT_DOUBLE_EQ(soft_dice(a, b), soft_dice(b, a));
}

TEST(SoftDice, BoundedForSoftInputs) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> p({3, 6, 6}), q({3, 6, 6});
    for (auto& v : p.values()) v = d(rng);
    for (auto& v : q.values()) v = d(rng);
    const double s = soft_dice(p, q);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_DOUBLE_EQ(s, soft_dice(q, p));
  }
}

TEST(Tre, Examples) {
  const Tensor<double> zero({2, 8, 8});
  const std::vector<Point2<double>> a{{2, 2}, {5.5, 3.25}};
  EXPECT_EQ(tre<double>(a, a, zero, {1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(tre<double>({{1, 1}}, {{4, 5}}, zero, {1, 1}), 5.0);
  Tensor<double> u({2, 8, 8});
  for (std::size_t p = 0; p < 64; ++p) {
    u[p] = 3;
    u[64 + p] = 4;
  }
  EXPECT_NEAR(tre<double>({{1, 1}}, {{4, 5}}, u, {1, 1}), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(tre<double>({{1, 1}}, {{4, 5}}, zero, {2, 1}), std::hypot(6.0, 4.0));
  EXPECT_THROW(tre<double>({}, {}, zero, {1, 1}), ConfigError);
}

TEST(Energies, MatchReference) {
  const auto v = samcl::testing::field_v(8, 8);
  EXPECT_NEAR(membrane_energy(v), oracle::membrane_v, 1e-14);
  EXPECT_NEAR(bending_energy(v), oracle::bending_v, 1e-14);
}

TEST(Energies, ConstantAndLinearFields) {
  Tensor<double> constant({2, 8, 8}, 0.7);
  EXPECT_EQ(membrane_energy(constant), 0.0);
  EXPECT_EQ(bending_energy(constant), 0.0);
  const double c = 0.3;
  Tensor<double> linear({2, 8, 8});
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) linear(0, y, x) = c * double(x);
  EXPECT_NEAR(membrane_energy(linear), c * c, 1e-15);
  EXPECT_NEAR(bending_energy(linear), 0.0, 1e-15);
}

TEST(Energies, GradientChecks) {
  const auto v = samcl::testing::field_v(16, 16);
  EXPECT_LT(tape_gradcheck(v, [](ad::Tape<double>&, ad::Var<double> x) { return ad::membrane_energy(x); }, 30, 1e-5,
                           1),
            1e-6);
  EXPECT_LT(tape_gradcheck(v, [](ad::Tape<double>&, ad::Var<double> x) { return ad::bending_energy(x); }, 30, 1e-5,
                           2),
            1e-6);
}

TEST(RegistrationLoss, IdenticalImagesAtInitialisation) {
  const auto model = model_for(32);
  const auto params = model.network.initial_parameters<double>(5);
  ImagePair<double> pair;
  pair.fixed = samcl::testing::contrast_image(32, 32);
  pair.moving = pair.fixed;
  const LossSpec spec;
  ad::Tape<double> tape;
  const auto bound = model.network.bind(tape, params, false);
  const auto terms = registration_loss(tape, model, bound, pair, spec);
  EXPECT_NEAR(terms.similarity.item(), -1.0, 1e-3);
  EXPECT_DOUBLE_EQ(terms.similarity.item(), -lncc(pair.fixed, pair.fixed, 3));
  EXPECT_EQ(terms.membrane.item() + terms.bending.item(), 0.0);
  EXPECT_EQ(terms.total.item(), terms.similarity.item());
}

TEST(RegistrationLoss, MissingAnnotationsRejected) {
  const auto model = model_for(32);
  const auto params = model.network.initial_parameters<double>(5);
  const auto pair = blob_pair(32, 1);
  LossSpec dice;
  dice.dissimilarity = Dissimilarity::lncc_plus_dice;
  LossSpec landmarks;
  landmarks.dissimilarity = Dissimilarity::lncc_plus_tre;
  for (const auto* spec : {&dice, &landmarks}) {
    ad::Tape<double> tape;
    const auto bound = model.network.bind(tape, params, false);
    EXPECT_THROW(registration_loss(tape, model, bound, pair, *spec), ConfigError);
  }
}

TEST(RegistrationLoss, CompositeGradientCheck) {
  const auto results = run_gradchecks(5, 20);
  for (const auto& r : results) {
    if (r.name.rfind("composite", 0) == 0) EXPECT_LT(r.max_relative_error, 1e-4) << r.name;
  }
}

TEST(RegistrationLoss, AdamDecreasesLossOnToyPair) {
  const auto model = model_for(32);
  auto params = model.network.initial_parameters<double>(7);
  const auto pair = blob_pair(32, 2.5);
  const LossSpec spec;
  const Sample<double> s{&pair, &spec};
  AdamState<double> adam(params.size());
  double previous = 0;
  int decreases = 0;
  for (int step = 0; step < 200; ++step) {
    const auto r = forward_backward(model, params, std::span<const Sample<double>>(&s, 1));
    if (step > 0 && r.loss < previous) ++decreases;
    previous = r.loss;
    params = adam_step(params, r.gradient, adam, 1e-4);
  }
  EXPECT_GE(decreases, int(0.8 * 199));
}

TEST(RegistrationLoss, SwappedInputsGiveInverseTransformAfterTraining) {
  const auto model = model_for(32);
  auto params = model.network.initial_parameters<double>(11);
  const auto pair = blob_pair(32, 2.5);
  auto swapped = pair;
  std::swap(swapped.fixed, swapped.moving);
  const LossSpec spec;
  const Sample<double> batch[] = {{&pair, &spec}, {&swapped, &spec}};
  AdamState<double> adam(params.size());
  for (int step = 0; step < 300; ++step) {
    const auto r = forward_backward(model, params, std::span<const Sample<double>>(batch));
    params = adam_step(params, r.gradient, adam, 1e-3);
  }
  const auto forward = predict_displacement(model, params, pair);
  const auto backward = predict_displacement(model, params, swapped);
  const auto residual = compose(forward, backward);
  const std::size_t plane = 32 * 32;
  double worst_residual = 0, worst_forward = 0;
  for (std::size_t y = 6; y < 26; ++y)
    for (std::size_t x = 6; x < 26; ++x) {
      const std::size_t p = y * 32 + x;
      worst_residual = std::max(worst_residual, std::hypot(residual[p], residual[plane + p]));
      worst_forward = std::max(worst_forward, std::hypot(forward[p], forward[plane + p]));
    }
  EXPECT_GT(worst_forward, 1.0);
  EXPECT_LT(worst_residual, 0.35 * worst_forward);
}
