#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "samcl/core/conv.hpp"
#include "samcl/core/ops.hpp"
#include "samcl/core/optim.hpp"
#include "samcl/core/spatial.hpp"
#include "samcl/harness/gradcheck.hpp"
#include "samcl/reg/objective.hpp"
#include "test_support.hpp"

using namespace samcl;
using samcl::testing::image_f;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

ImagePair<double> toy_pair(std::size_t n, bool identical) {
  ImagePair<double> p;
  p.fixed = identical ? samcl::testing::contrast_image(n, n) : image_f(n, n);
  p.moving = identical ? p.fixed : samcl::testing::image_g(n, n);
  return p;
}

RegistrationModel small_model(std::size_t n) {
  Architecture a;
  a.height = n;
  a.width = n;
  a.encoder = {4, 8, 8};
  a.decoder = {8, 8, 4};
  return RegistrationModel{Network(a), true, 7};
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor<double> t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t(1, 2), 6.0);
}

TEST(Tape, ElementwiseGradients) {
  const auto a0 = random_tensor({3, 4}, 1, 0.5, 2.0);
  const auto b0 = random_tensor({3, 4}, 2, 0.5, 2.0);
  const auto build = [&](ad::Tape<double>& t, ad::Var<double> a) {
    auto b = t.constant(b0);
    auto x = ad::leaky_relu(a * b - ad::scale(a, 0.7), 0.2);
    return ad::sum(ad::square(x) / ad::add_scalar(a + b, 1.0));
  };
  EXPECT_LT(tape_gradcheck(a0, build, 12, 1e-5, 3), 1e-6);
}

TEST(Tape, ConvolutionGradientsBothPaths) {
  const auto x0 = random_tensor({3, 8, 8}, 4);
  const auto w0 = random_tensor({5, 3, 3, 3}, 5);
  const auto b0 = random_tensor({5}, 6);
  for (std::size_t stride : {1u, 2u}) {
    const auto wrt_input = [&](ad::Tape<double>& t, ad::Var<double> x) {
      return ad::sum(ad::square(ad::conv2d(x, t.constant(w0), t.constant(b0), stride)));
    };
    const auto wrt_weight = [&](ad::Tape<double>& t, ad::Var<double> w) {
      return ad::sum(ad::square(ad::conv2d(t.constant(x0), w, t.constant(b0), stride)));
    };
    const auto wrt_bias = [&](ad::Tape<double>& t, ad::Var<double> b) {
      return ad::sum(ad::square(ad::conv2d(t.constant(x0), t.constant(w0), b, stride)));
    };
    EXPECT_LT(tape_gradcheck(x0, wrt_input, 20, 1e-6, 7), 1e-7) << "stride " << stride;
    EXPECT_LT(tape_gradcheck(w0, wrt_weight, 20, 1e-6, 8), 1e-7) << "stride " << stride;
    EXPECT_LT(tape_gradcheck(b0, wrt_bias, 5, 1e-6, 9), 1e-7) << "stride " << stride;
  }
}

TEST(Tape, UpsampleAndConcatGradients) {
  const auto a0 = random_tensor({2, 3, 3}, 10);
  const auto b0 = random_tensor({1, 6, 6}, 11);
  const auto build = [&](ad::Tape<double>& t, ad::Var<double> a) {
    auto c = ad::concat_channels(ad::upsample2x(a), t.constant(b0));
    return ad::sum(ad::square(c) * c);
  };
  EXPECT_LT(tape_gradcheck(a0, build, 18, 1e-6, 12), 1e-7);
}

TEST(Tape, BilinearWarpGradientWrtImageAndDisplacement) {
  const auto img = image_f(8, 8).reshaped({1, 8, 8});
  const auto u0 = samcl::testing::warp_field(8, 8);
  const auto wrt_image = [&](ad::Tape<double>& t, ad::Var<double> im) {
    return ad::sum(ad::square(ad::warp(im, t.constant(u0))));
  };
  const auto wrt_disp = [&](ad::Tape<double>& t, ad::Var<double> u) {
    return ad::sum(ad::square(ad::warp(t.constant(img), u)));
  };
  EXPECT_LT(tape_gradcheck(img, wrt_image, 30, 1e-6, 13), 1e-4);
  EXPECT_LT(tape_gradcheck(u0, wrt_disp, 30, 1e-6, 14), 1e-4);
}

TEST(Tape, ExtrapolatingWarpGradientPastTheGrid) {
  const auto img = image_f(8, 8).reshaped({1, 8, 8});
  auto u0 = samcl::testing::warp_field(8, 8);
  for (auto& e : u0.values()) e *= 4.0;
  const auto wrt_image = [&](ad::Tape<double>& t, ad::Var<double> im) {
    return ad::sum(ad::square(ad::warp(im, t.constant(u0), kernels::Border::extrapolate)));
  };
  const auto wrt_disp = [&](ad::Tape<double>& t, ad::Var<double> u) {
    return ad::sum(ad::square(ad::warp(t.constant(img), u, kernels::Border::extrapolate)));
  };
  EXPECT_LT(tape_gradcheck(img, wrt_image, 30, 1e-6, 15), 1e-4);
  EXPECT_LT(tape_gradcheck(u0, wrt_disp, 30, 1e-6, 16), 1e-4);
}

TEST(ForwardBackward, IdenticalImagesAtInitialisationGiveMinusOne) {
  const auto model = small_model(16);
  const auto params = model.network.initial_parameters<double>(1);
  const auto pair = toy_pair(16, true);
  const LossSpec spec;
  const Sample<double> s{&pair, &spec};
  const auto out = forward_backward(model, params, std::span<const Sample<double>>(&s, 1));
  EXPECT_NEAR(out.loss, -1.0, 1e-3);

  ad::Tape<double> tape;
  auto bound = model.network.bind(tape, params, false);
  const auto terms = registration_loss(tape, model, bound, pair, spec);
  EXPECT_EQ(terms.membrane.item(), 0.0);
  EXPECT_EQ(terms.bending.item(), 0.0);
}

TEST(ForwardBackward, CompositeIsSumOfSeparateTerms) {
  const auto model = small_model(16);
  auto params = model.network.initial_parameters<double>(2);
  const auto& head = model.network.layers().back();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0, 0.05);
  for (std::size_t i = 0; i < head.weight_count(); ++i) params[head.weight_offset + i] = d(rng);
  const auto pair = toy_pair(16, false);
  const LossSpec spec;

  ad::Tape<double> tape;
  auto bound = model.network.bind(tape, params, false);
  const auto terms = registration_loss(tape, model, bound, pair, spec);
  const auto v = terms.velocity.value();
  EXPECT_GT(v.max_abs(), 0.0);
  const double separate = terms.similarity.item() + membrane_energy(v) + bending_energy(v);
  EXPECT_NEAR(terms.total.item(), separate, 1e-12);
}

TEST(ForwardBackward, GradientMatchesFiniteDifferences) {
  const auto model = small_model(16);
  auto params = model.network.initial_parameters<double>(4);
  const auto& head = model.network.layers().back();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0, 0.05);
  for (std::size_t i = 0; i < head.weight_count(); ++i) params[head.weight_offset + i] = d(rng);
  const auto a = toy_pair(16, false);
  auto b = a;
  std::swap(b.fixed, b.moving);
  const LossSpec spec;
  const Sample<double> batch[] = {{&a, &spec}, {&b, &spec}};
  EXPECT_LT(gradient_check(model, params, std::span<const Sample<double>>(batch), 20, 1e-5, 6), 1e-4);
}

TEST(ForwardBackward, NonFiniteLossNamesTheTerm) {
  const auto model = small_model(16);
  auto params = model.network.initial_parameters<double>(1);
  auto pair = toy_pair(16, false);
  pair.moving(3, 3) = std::numeric_limits<double>::quiet_NaN();
  const LossSpec spec;
  const Sample<double> s{&pair, &spec};
  try {
    (void)forward_backward(model, params, std::span<const Sample<double>>(&s, 1));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_FALSE(e.term().empty());
  }
}

TEST(ForwardBackward, DeterministicForward) {
  const auto model = small_model(16);
  auto params = model.network.initial_parameters<double>(9);
  const auto pair = toy_pair(16, false);
  const LossSpec spec;
  const Sample<double> s{&pair, &spec};
  const auto x = forward_backward(model, params, std::span<const Sample<double>>(&s, 1));
  const auto y = forward_backward(model, params, std::span<const Sample<double>>(&s, 1));
  EXPECT_EQ(x.loss, y.loss);
  EXPECT_TRUE(x.gradient == y.gradient);
}

TEST(Sgd, ZeroGradientLeavesParameters) {
  const ParameterVector<double> p(std::vector<double>{1, -2, 3});
  EXPECT_TRUE(sgd_step(p, GradientVector<double>(3), 0.1) == p);
}

TEST(Sgd, HandArithmetic) {
  const ParameterVector<double> p(std::vector<double>{1, 2});
  const GradientVector<double> g(std::vector<double>{0.5, -1});
  const auto out = sgd_step(p, g, 0.1);
  EXPECT_DOUBLE_EQ(out[0], 0.95);
  EXPECT_DOUBLE_EQ(out[1], 2.1);
}

TEST(Sgd, DefaultLearningRateBoundsTheStep) {
  const ParameterVector<double> p(std::vector<double>{0.3, -0.7, 1.1});
  const GradientVector<double> g(std::vector<double>{5, -8, 2});
  const auto out = sgd_step(p, g, 1e-4);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::abs(out[i] - p[i]), 1e-4 * 8 * (1 + 1e-12));
}

TEST(Sgd, Errors) {
  const ParameterVector<double> p(2);
  EXPECT_THROW(sgd_step(p, GradientVector<double>(3), 0.1), ShapeError);
  EXPECT_THROW(sgd_step(p, GradientVector<double>(2), 0.0), ConfigError);
}

TEST(Adam, ZeroGradientFreshState) {
  const ParameterVector<double> p(std::vector<double>{0.25, -4});
  AdamState<double> s(2);
  const auto out = adam_step(p, GradientVector<double>(2), s, 1e-3);
  EXPECT_TRUE(out == p);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ZeroGradientIdentityWhenFirstMomentIsZero) {
  const ParameterVector<double> p(std::vector<double>{0.25, -4, 9});
  AdamState<double> s(3);
  s.second_moment = {0.3, 0.0, 17.0};
  s.step = 41;
  const auto out = adam_step(p, GradientVector<double>(3), s, 0.5);
  EXPECT_TRUE(out == p);
}

TEST(Adam, FirstStepClosedForm) {
  AdamState<double> s(1);
  const auto out = adam_step(ParameterVector<double>(std::vector<double>{0.0}),
                             GradientVector<double>(std::vector<double>{1.0}), s, 1e-3);
  EXPECT_NEAR(out[0], -1e-3 / (1 + 1e-8), 1e-18);
}

TEST(Adam, QuadraticTrajectory) {
  AdamState<double> s(1);
  ParameterVector<double> x(std::vector<double>{1.0});
  double previous = 1.0;
  for (int step = 1; step <= 100; ++step) {
    x = adam_step(x, GradientVector<double>(std::vector<double>{2 * x[0]}), s, 0.01);
    if (step == 1) EXPECT_NEAR(x[0], samcl::testing::oracle::adam_first_step, 1e-15);
    if (step > 5) EXPECT_LT(std::abs(x[0]), std::abs(previous));
    previous = x[0];
  }
  EXPECT_NEAR(x[0], samcl::testing::oracle::adam_x100, 1e-12);
}

TEST(Adam, Errors) {
  AdamState<double> s(2);
  EXPECT_THROW(adam_step(ParameterVector<double>(2), GradientVector<double>(2), s, 0.0), ConfigError);
  EXPECT_THROW(adam_step(ParameterVector<double>(3), GradientVector<double>(3), s, 0.1), ShapeError);
}

TEST(Parameters, SnapshotRestoreIsBitExact) {
  const auto model = small_model(16);
  const auto params = model.network.initial_parameters<double>(12);
  const auto snapshot = params;
  auto work = params;
  for (std::size_t i = 0; i < work.size(); ++i) work[i] += 1e-3 * double(i % 5);
  work = snapshot;
  EXPECT_TRUE(work == params);
  EXPECT_EQ(std::memcmp(work.storage().data(), params.storage().data(), params.size() * sizeof(double)), 0);
}

TEST(GradientCheck, MembraneOnRandomVelocity) {
  const auto v0 = random_tensor({2, 16, 16}, 20);
  const auto build = [](ad::Tape<double>&, ad::Var<double> v) { return ad::membrane_energy(v); };
  EXPECT_LT(tape_gradcheck(v0, build, 30, 1e-5, 21), 1e-6);
}

TEST(GradientCheck, LnccOnRandomImages) {
  const auto f0 = random_tensor({1, 16, 16}, 22, 0, 1);
  const auto g0 = random_tensor({1, 16, 16}, 23, 0, 1);
  const auto build = [&](ad::Tape<double>& t, ad::Var<double> g) { return ad::lncc(t.constant(f0), g, 3); };
  EXPECT_LT(tape_gradcheck(g0, build, 30, 1e-6, 24), 1e-4);
}

TEST(GradientCheck, ZeroParameterModelReportsZero) {
  const auto zero = check_gradient<double>({}, {}, [](const std::vector<double>&) { return 0.0; }, 5, 1e-5);
  EXPECT_EQ(zero, 0.0);
}

TEST(GradientCheck, FullSuiteBelowTolerance) {
  for (const auto& r : run_gradchecks()) {
    EXPECT_LT(r.max_relative_error, 1e-4) << r.name;
    EXPECT_LE(r.skipped, 4u) << r.name;
  }
}

TEST(GradientCheck, DetectsAWrongGradient) {
  const std::vector<double> x{0.3, -1.2, 0.8};
  const auto loss = [](const std::vector<double>& p) { return p[0] * p[0] + std::sin(p[1]) + p[0] * p[2]; };
  const std::vector<double> exact{2 * 0.3 + 0.8, std::cos(-1.2), 0.3};
  EXPECT_LT(check_gradient<double>(x, exact, loss, 10, 1e-5), 1e-8);
  auto wrong = exact;
  wrong[1] *= 1.001;
  EXPECT_GT(check_gradient<double>(x, wrong, loss, 30, 1e-5), 1e-4);
}

TEST(GradientCheck, KinkInsideTheStencilIsReplaced) {
  std::vector<double> x(10, 0.5);
  x[0] = 1e-7;
  const auto loss = [](const std::vector<double>& p) {
    double s = std::abs(p[0]);
    for (std::size_t i = 1; i < p.size(); ++i) s += p[i] * p[i];
    return s;
  };
  std::vector<double> exact(10, 1.0);
  std::size_t skipped = 0;
  EXPECT_LT(check_gradient<double>(x, exact, loss, 20, 1e-5, 3, &skipped), 1e-8);
  EXPECT_GT(skipped, 0u);
}
