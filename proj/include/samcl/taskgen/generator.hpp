#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "samcl/core/rng.hpp"
#include "samcl/reg/fields.hpp"
#include "samcl/reg/image_pair.hpp"
#include "samcl/taskgen/task_spec.hpp"

namespace samcl {

namespace gen_detail {

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Rotated ellipse with a sinusoidally wobbling rim.
struct Blob {
  double cx = 0, cy = 0, rx = 1, ry = 1, angle = 0, wobble = 0, lobes = 0, phase = 0;

  [[nodiscard]] bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx, v = (-s * dx + c * dy) / ry;
    const double r = std::hypot(u, v);
    const double rim = 1.0 + wobble * std::sin(lobes * std::atan2(v, u) + phase);
    return r <= rim;
  }
};

inline Blob random_blob(Rng& rng, double cx, double cy, double rx, double ry, double wobble) {
  Blob b;
  b.cx = cx;
  b.cy = cy;
  b.rx = std::max(rx, 0.5);
  b.ry = std::max(ry, 0.5);
  b.angle = uniform(rng, -0.3, 0.3);
  b.wobble = wobble;
  b.lobes = std::floor(uniform(rng, 3.0, 7.0));
  b.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return b;
}

/// Separable Gaussian blur of an [H,W] plane, border replicated.
inline std::vector<double> blur(const std::vector<double>& in, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0;
  for (int k = -radius; k <= radius; ++k) total += kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  for (auto& k : kernel) k /= total;
  const auto clampi = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, long(n) - 1)); };
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * in[y * w + clampi(long(x) + k, w)];
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[clampi(long(y) + k, h) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

inline std::vector<double> white_noise(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  return out;
}

/// Smooth zero-mean field with unit standard deviation.
inline std::vector<double> smooth_noise(Rng& rng, std::size_t h, std::size_t w, double sigma) {
  auto field = blur(white_noise(rng, h * w), h, w, sigma);
  double mean = 0, var = 0;
  for (double v : field) mean += v;
  mean /= double(field.size());
  for (double v : field) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(field.size()));
  for (auto& v : field) v = sd > 0 ? (v - mean) / sd : 0.0;
  return field;
}

/// Labelled anatomy plus its tissue value per pixel (intensity in [0,1] or HU).
struct Anatomy {
  std::vector<std::uint16_t> labels;
  std::vector<double> tissue;
  std::vector<Point2<double>> landmark_hints;  // fallback landmark positions (blob centres)
  bool hounsfield = false;
};

struct Painter {
  std::size_t h, w;
  Anatomy& a;
  void fill(const Blob& b, std::uint16_t label, double value, bool set_label = true) const {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (!b.contains(double(x), double(y))) continue;
        a.tissue[y * w + x] = value;
        if (set_label) a.labels[y * w + x] = label;
      }
    }
  }
};

inline Anatomy brainlike(Rng& rng, std::size_t h, std::size_t w, std::size_t label_count) {
  Anatomy a{std::vector<std::uint16_t>(h * w, 0), std::vector<double>(h * w, 0.0), {}, false};
  Painter paint{h, w, a};
  const double s = double(std::min(h, w)) / 64.0;
  const double cx = double(w - 1) / 2 + uniform(rng, -2, 2) * s, cy = double(h - 1) / 2 + uniform(rng, -2, 2) * s;
  const double rx = uniform(rng, 22, 26) * s, ry = uniform(rng, 25, 29) * s;
  paint.fill(random_blob(rng, cx, cy, rx, ry, 0.04), 1, 0.45);
  if (label_count > 2) paint.fill(random_blob(rng, cx, cy, rx * 0.7, ry * 0.72, 0.12), 2, 0.8);
  if (label_count > 3) {
    const double off = uniform(rng, 4, 6) * s, dy = uniform(rng, -3, 1) * s;
    for (double side : {-1.0, 1.0}) {
      paint.fill(random_blob(rng, cx + side * off, cy + dy, uniform(rng, 2.5, 3.5) * s, uniform(rng, 5, 7) * s, 0.1),
                 3, 0.12);
    }
  }
  for (std::size_t label = 4; label < label_count; ++label) {
    const double angle = uniform(rng, 0, 2 * std::numbers::pi), dist = uniform(rng, 8, 12) * s;
    paint.fill(random_blob(rng, cx + dist * std::cos(angle), cy + dist * std::sin(angle), uniform(rng, 3, 4.5) * s,
                           uniform(rng, 3, 4.5) * s, 0.1),
               static_cast<std::uint16_t>(label), 0.6);
  }
  return a;
}

inline Blob body_outline(Rng& rng, std::size_t h, std::size_t w, double s, double& cx, double& cy) {
  cx = double(w - 1) / 2 + uniform(rng, -1.5, 1.5) * s;
  cy = double(h - 1) / 2 + uniform(rng, -1.5, 1.5) * s;
  return random_blob(rng, cx, cy, uniform(rng, 27, 30) * s, uniform(rng, 21, 25) * s, 0.03);
}

inline Anatomy multiorgan(Rng& rng, std::size_t h, std::size_t w, std::size_t label_count) {
  Anatomy a{std::vector<std::uint16_t>(h * w, 0), std::vector<double>(h * w, -1000.0), {}, true};
  Painter paint{h, w, a};
  const double s = double(std::min(h, w)) / 64.0;
  double cx = 0, cy = 0;
  paint.fill(body_outline(rng, h, w, s, cx, cy), 0, 40.0, false);
  struct Organ { double dx, dy, rx, ry, hu; };
  const Organ organs[] = {{-9, -4, 10.5, 8, 110}, {12, -6, 4.5, 4.5, 170}, {-9, 7, 3, 4.5, 240},
                          {0, 13, 3.5, 3.5, 500}, {4, -10, 4.5, 4, -120}, {9, 7, 3, 4.5, 240}};
  for (std::size_t label = 1; label < label_count; ++label) {
    const Organ& o = organs[(label - 1) % std::size(organs)];
    const double jx = uniform(rng, -1.5, 1.5) * s, jy = uniform(rng, -1.5, 1.5) * s;
    const double grow = uniform(rng, 0.85, 1.15);
    paint.fill(random_blob(rng, cx + o.dx * s + jx, cy + o.dy * s + jy, o.rx * s * grow, o.ry * s * grow, 0.1),
               static_cast<std::uint16_t>(label), o.hu);
  }
  return a;
}

inline Anatomy lunglike(Rng& rng, std::size_t h, std::size_t w, std::size_t label_count, std::size_t landmarks) {
  Anatomy a{std::vector<std::uint16_t>(h * w, 0), std::vector<double>(h * w, -1000.0), {}, true};
  Painter paint{h, w, a};
  const double s = double(std::min(h, w)) / 64.0;
  double cx = 0, cy = 0;
  paint.fill(body_outline(rng, h, w, s, cx, cy), 0, 40.0, false);
  Blob lungs[2];
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    lungs[side] = random_blob(rng, cx + sign * uniform(rng, 9.5, 11) * s, cy + uniform(rng, -1, 1) * s,
                              uniform(rng, 8, 10) * s, uniform(rng, 13, 16) * s, 0.05);
    if (label_count > std::size_t(1 + side)) paint.fill(lungs[side], static_cast<std::uint16_t>(1 + side), -850.0);
  }
  for (std::size_t k = 0; k < landmarks; ++k) {
    const Blob& lung = lungs[k % 2];
    const double angle = uniform(rng, 0, 2 * std::numbers::pi), dist = uniform(rng, 0.1, 0.6);
    const double px = lung.cx + dist * lung.rx * std::cos(angle), py = lung.cy + dist * lung.ry * std::sin(angle);
    const double r = uniform(rng, 1.5, 2.2) * s;
    const auto label = static_cast<std::uint16_t>(3 + k);
    paint.fill(random_blob(rng, px, py, r, r, 0.0), label, 80.0, label < label_count);
    a.landmark_hints.push_back({px, py});
  }
  return a;
}

/// Tissue values mapped to [0,1]; HU are clipped to the window first.
inline std::vector<double> normalise(const Anatomy& a, const std::array<double, 2>& window) {
  std::vector<double> out(a.tissue.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = a.hounsfield ? (std::clamp(a.tissue[p], window[0], window[1]) - window[0]) / (window[1] - window[0])
                          : a.tissue[p];
  }
  return out;
}

inline void add_texture(std::vector<double>& image, const std::vector<double>& texture, double amount) {
  for (std::size_t p = 0; p < image.size(); ++p) image[p] = std::clamp(image[p] + amount * texture[p], 0.0, 1.0);
}

template <class Real>
Tensor<Real> to_tensor(const std::vector<double>& v, Shape shape) {
  Tensor<Real> out(std::move(shape));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<Real>(static_cast<float>(v[i]));
  return out;
}

inline Tensor<double> from_plane(const std::vector<double>& v, std::size_t h, std::size_t w) {
  return Tensor<double>({h, w}, v);
}

}  // namespace gen_detail

/// Ground-truth velocity for one pair: noise on a margin-padded grid, smoothed and
/// cropped (so the border is statistically like the interior), scaled to max |v| = spec.deformation.
inline Tensor<double> random_velocity(const TaskSpec& spec, Rng& rng) {
  const std::size_t h = spec.height, w = spec.width;
  const double sigma = spec.velocity_sigma();
  const auto margin = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  const std::size_t ph = h + 2 * margin, pw = w + 2 * margin;
  const auto vx = gen_detail::blur(gen_detail::white_noise(rng, ph * pw), ph, pw, sigma);
  const auto vy = gen_detail::blur(gen_detail::white_noise(rng, ph * pw), ph, pw, sigma);
  Tensor<double> v({2, h, w});
  double peak = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t src = (y + margin) * pw + x + margin, p = y * w + x;
      v[p] = vx[src];
      v[h * w + p] = vy[src];
      peak = std::max(peak, std::hypot(vx[src], vy[src]));
    }
  }
  const double gain = peak > 0 ? spec.deformation / peak : 0.0;
  for (auto& x : v.values()) x *= gain;
  return v;
}

/// One synthetic pair. moving = fixed o exp(-v), so exp(v) is the displacement that
/// registers moving onto fixed and moving landmarks are x + exp(v)(x).
template <class Real>
ImagePair<Real> generate_pair(const TaskSpec& spec, Rng& rng) {
  using namespace gen_detail;
  spec.validate();
  const std::size_t h = spec.height, w = spec.width, plane = h * w;
  const double s = double(std::min(h, w)) / 64.0;

  Anatomy anatomy;
  switch (spec.family) {
    case TaskFamily::mono_brainlike: anatomy = brainlike(rng, h, w, spec.label_count); break;
    case TaskFamily::mono_multiorgan:
    case TaskFamily::cross_modality: anatomy = multiorgan(rng, h, w, spec.label_count); break;
    case TaskFamily::mono_lunglike_landmarks:
      anatomy = lunglike(rng, h, w, spec.label_count, spec.landmark_count);
      break;
  }
  const Tensor<double> velocity = random_velocity(spec, rng);
  const Tensor<double> forward = exponentiate(velocity, 7);
  Tensor<double> negated = velocity;
  for (auto& x : negated.values()) x = -x;
  const Tensor<double> backward = exponentiate(negated, 7);

  const std::vector<double> base = normalise(anatomy, spec.ct_window);
  const std::vector<double> texture = smooth_noise(rng, h, w, 1.5 * s);
  std::vector<double> fixed = base;
  add_texture(fixed, texture, spec.texture);

  std::vector<double> moving;
  if (spec.family == TaskFamily::cross_modality) {
    // Contrast-inverted, gamma-compressed appearance with its own texture.
    const Tensor<double> moved = warp(from_plane(base, h, w), backward, Interpolation::bilinear);
    moving.resize(plane);
    for (std::size_t p = 0; p < plane; ++p) moving[p] = 1.0 - std::sqrt(std::clamp(moved[p], 0.0, 1.0));
    add_texture(moving, smooth_noise(rng, h, w, 1.5 * s), spec.texture);
  } else {
    const Tensor<double> moved = warp(from_plane(fixed, h, w), backward, Interpolation::bilinear);
    moving.assign(moved.values().begin(), moved.values().end());
    for (auto& v : moving) v = std::clamp(v, 0.0, 1.0);
  }

  ImagePair<Real> pair;
  pair.fixed = to_tensor<Real>(fixed, {h, w});
  pair.moving = to_tensor<Real>(moving, {h, w});
  pair.label_count = spec.label_count;
  LabelMap labels({h, w});
  std::copy(anatomy.labels.begin(), anatomy.labels.end(), labels.values().begin());
  pair.moving_labels = kernels::warp_nearest(labels, backward);
  pair.fixed_labels = std::move(labels);
  pair.true_displacement = to_tensor<Real>(std::vector<double>(forward.values().begin(), forward.values().end()),
                                           {2, h, w});

  if (spec.uses_landmarks()) {
    for (std::size_t k = 0; k < spec.landmark_count; ++k) {
      // Centroid of the vessel blob in the fixed image, else its nominal centre.
      const auto label = static_cast<std::uint16_t>(3 + k);
      double sx = 0, sy = 0, n = 0;
      if (label < spec.label_count) {
        for (std::size_t p = 0; p < plane; ++p) {
          if (anatomy.labels[p] != label) continue;
          sx += double(p % w);
          sy += double(p / w);
          n += 1;
        }
      }
      const Point2<double> centre = n > 0 ? Point2<double>{sx / n, sy / n} : anatomy.landmark_hints[k];
      // volatile: GCC 11 at -O3 drops this float rounding
      volatile float rounded[2] = {static_cast<float>(centre.x), static_cast<float>(centre.y)};
      const Point2<float> fixed_point{rounded[0], rounded[1]};
      const std::vector<Point2<double>> query{{fixed_point.x, fixed_point.y}};
      const Tensor<double> at = kernels::sample_points(forward, query);
      const Point2<float> moving_point{static_cast<float>(fixed_point.x + at(0, 0)),
                                       static_cast<float>(fixed_point.y + at(1, 0))};
      pair.fixed_landmarks.push_back({static_cast<Real>(fixed_point.x), static_cast<Real>(fixed_point.y)});
      pair.moving_landmarks.push_back({static_cast<Real>(moving_point.x), static_cast<Real>(moving_point.y)});
    }
  }
  return pair;
}

template <class Real>
struct TaskData {
  TaskSpec spec;
  std::vector<ImagePair<Real>> train, val, test;

  friend bool operator==(const TaskData&, const TaskData&) = default;
};

template <class Real>
struct TaskStream {
  std::vector<TaskData<Real>> tasks;

  [[nodiscard]] std::size_t size() const { return tasks.size(); }
  friend bool operator==(const TaskStream&, const TaskStream&) = default;
};

struct StreamConfig {
  std::vector<TaskSpec> tasks;
  std::vector<std::string> order;  // task names; empty = declaration order
};

enum class Split : std::uint64_t { train = 0, val = 1, test = 2 };

inline std::uint64_t pair_seed(const TaskSpec& spec, Split split, std::size_t index) {
  return derive_seed(spec.seed, static_cast<std::uint64_t>(split) * 1000000ULL + index);
}

/// Every split of one task; `task_id` is the task's position in the stream.
template <class Real>
TaskData<Real> materialise_task(const TaskSpec& spec, int task_id) {
  TaskData<Real> data{spec, {}, {}, {}};
  const auto fill = [&](std::vector<ImagePair<Real>>& out, Split split, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(pair_seed(spec, split, i));
      out.push_back(generate_pair<Real>(spec, rng));
      out.back().task_id = task_id;
    }
  };
  fill(data.train, Split::train, spec.n_train);
  fill(data.val, Split::val, spec.n_val);
  fill(data.test, Split::test, spec.n_test);
  return data;
}

/// Task specs in stream order after validating names and the order list.
inline std::vector<TaskSpec> ordered_tasks(const StreamConfig& config) {
  if (config.tasks.empty()) throw ConfigError("stream: at least one task is required");
  for (std::size_t i = 0; i < config.tasks.size(); ++i) {
    config.tasks[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (config.tasks[i].name == config.tasks[j].name) {
        throw ConfigError("stream: duplicate task name '" + config.tasks[i].name + "'");
      }
    }
  }
  if (config.order.empty()) return config.tasks;
  std::vector<TaskSpec> out;
  for (const auto& name : config.order) {
    auto it = std::find_if(config.tasks.begin(), config.tasks.end(), [&](const TaskSpec& t) { return t.name == name; });
    if (it == config.tasks.end()) throw ConfigError("stream: order names unknown task '" + name + "'");
    for (const auto& seen : out) {
      if (seen.name == name) throw ConfigError("stream: order lists task '" + name + "' twice");
    }
    out.push_back(*it);
  }
  return out;
}

template <class Real>
TaskStream<Real> build_stream(const StreamConfig& config) {
  TaskStream<Real> stream;
  const auto tasks = ordered_tasks(config);
  for (std::size_t t = 0; t < tasks.size(); ++t) stream.tasks.push_back(materialise_task<Real>(tasks[t], int(t)));
  return stream;
}

}  // namespace samcl
