#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "samcl/cl/training.hpp"
#include "samcl/core/errors.hpp"
#include "samcl/reg/image_pair.hpp"

namespace samcl {

/// Complete resumable state of one strategy run plus the metadata needed to reuse it.
template <class Real>
struct Checkpoint {
  StrategyState<Real, ImagePair<Real>> state;
  nlohmann::json meta;  // model, tasks, metric kinds, config fingerprint
  bool complete = false;
};

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'S', 'A', 'M', 'C', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <class T>
  void array(const std::vector<T>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw FormatError(path_, "truncated checkpoint");
    return v;
  }
  template <class T>
  std::vector<T> array() {
    const auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 34)) throw FormatError(path_, "implausible array length");
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw FormatError(path_, "truncated checkpoint");
    return v;
  }
  std::string string() {
    const auto bytes = array<char>();
    return std::string(bytes.begin(), bytes.end());
  }
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::istream& in_;
  std::string path_;
};

template <class Real>
void write_pair(Writer& w, const ImagePair<Real>& p) {
  w.pod<std::int32_t>(p.task_id);
  w.pod<std::uint64_t>(p.label_count);
  w.array(p.fixed.shape());
  w.array(p.fixed.storage());
  w.array(p.moving.storage());
  w.pod<std::uint8_t>(p.has_labels() ? 1 : 0);
  if (p.has_labels()) {
    w.array(p.fixed_labels->storage());
    w.array(p.moving_labels->storage());
  }
  std::vector<Real> landmarks;
  for (std::size_t n = 0; n < p.fixed_landmarks.size(); ++n) {
    landmarks.insert(landmarks.end(), {p.fixed_landmarks[n].x, p.fixed_landmarks[n].y, p.moving_landmarks[n].x,
                                       p.moving_landmarks[n].y});
  }
  w.array(landmarks);
  w.pod<std::uint8_t>(p.true_displacement ? 1 : 0);
  if (p.true_displacement) w.array(p.true_displacement->storage());
}

template <class Real>
ImagePair<Real> read_pair(Reader& r) {
  ImagePair<Real> p;
  p.task_id = r.pod<std::int32_t>();
  p.label_count = r.pod<std::uint64_t>();
  const Shape shape = r.array<std::size_t>();
  if (shape.size() != 2) throw FormatError(r.path(), "stored pair is not 2D");
  p.fixed = Tensor<Real>(shape, r.array<Real>());
  p.moving = Tensor<Real>(shape, r.array<Real>());
  if (r.pod<std::uint8_t>()) {
    p.fixed_labels = LabelMap(shape, r.array<std::uint16_t>());
    p.moving_labels = LabelMap(shape, r.array<std::uint16_t>());
  }
  const auto landmarks = r.array<Real>();
  if (landmarks.size() % 4 != 0) throw FormatError(r.path(), "landmark block is not a multiple of 4");
  for (std::size_t k = 0; k < landmarks.size(); k += 4) {
    p.fixed_landmarks.push_back({landmarks[k], landmarks[k + 1]});
    p.moving_landmarks.push_back({landmarks[k + 2], landmarks[k + 3]});
  }
  if (r.pod<std::uint8_t>()) p.true_displacement = Tensor<Real>({2, shape[0], shape[1]}, r.array<Real>());
  return p;
}

inline nlohmann::json rows_to_json(const std::vector<std::vector<TaskScore>>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& s : row) r.push_back({{"mean", s.mean}, {"per_pair", s.per_pair}});
    out.push_back(r);
  }
  return out;
}

inline std::vector<std::vector<TaskScore>> rows_from_json(const nlohmann::json& j) {
  std::vector<std::vector<TaskScore>> rows;
  for (const auto& r : j) {
    std::vector<TaskScore> row;
    for (const auto& s : r) row.push_back({s.at("mean").get<double>(), s.at("per_pair").get<std::vector<double>>()});
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Real>
constexpr const char* precision_name() {
  return sizeof(Real) == 8 ? "float64" : "float32";
}

}  // namespace ckpt_detail

/// Writes atomically: a temporary file is renamed over `path`.
template <class Real>
void save_checkpoint(const Checkpoint<Real>& ckpt, const std::filesystem::path& path) {
  using namespace ckpt_detail;
  const auto& s = ckpt.state;
  nlohmann::json header = {{"strategy", to_string(s.kind)},
                           {"precision", precision_name<Real>()},
                           {"complete", ckpt.complete},
                           {"task", s.task},
                           {"iteration", s.iteration},
                           {"total_iterations", s.total_iterations},
                           {"replay_skips", s.replay_skips},
                           {"sam_fallbacks", s.sam_fallbacks},
                           {"rng", rng_state(s.rng)},
                           {"buffer", {{"capacity", s.buffer.capacity()}, {"seen", s.buffer.seen()},
                                       {"rng", rng_state(s.buffer.rng())}}},
                           {"adam", {{"step", s.adam.step}, {"beta1", s.adam.beta1}, {"beta2", s.adam.beta2},
                                     {"epsilon", s.adam.epsilon}}},
                           {"rows", rows_to_json(s.rows)},
                           {"meta", ckpt.meta}};
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(tmp.string(), "cannot write checkpoint");
    out.write(kMagic, sizeof kMagic);
    Writer w(out);
    w.pod(kVersion);
    w.string(header.dump());
    w.array(s.params.storage());
    w.array(s.initial_params.storage());
    w.array(s.adam.first_moment);
    w.array(s.adam.second_moment);
    w.pod<std::uint64_t>(s.anchors.size());
    for (const auto& a : s.anchors) {
      w.array(a.params.storage());
      w.array(a.fisher);
    }
    w.pod<std::uint64_t>(s.buffer.items().size());
    for (const auto& item : s.buffer.items()) write_pair(w, item);
    if (!out) throw FormatError(tmp.string(), "write failed");
  }
  std::filesystem::rename(tmp, path);
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open checkpoint");
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(path.string(), "not a checkpoint");
  Reader r(in, path.string());
  if (r.pod<std::uint32_t>() != kVersion) throw FormatError(path.string(), "unsupported checkpoint version");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), e.what());
  }
  Checkpoint<Real> ckpt;
  auto& s = ckpt.state;
  try {
    if (header.at("precision").get<std::string>() != precision_name<Real>()) {
      throw FormatError(path.string(), "checkpoint precision is " + header.at("precision").get<std::string>());
    }
    ckpt.complete = header.at("complete").get<bool>();
    ckpt.meta = header.at("meta");
    s.kind = parse_strategy(header.at("strategy").get<std::string>());
    s.task = header.at("task").get<std::size_t>();
    s.iteration = header.at("iteration").get<std::size_t>();
    s.total_iterations = header.at("total_iterations").get<std::uint64_t>();
    s.replay_skips = header.at("replay_skips").get<std::uint64_t>();
    s.sam_fallbacks = header.at("sam_fallbacks").get<std::uint64_t>();
    s.rng = rng_from_state(header.at("rng").get<std::string>());
    s.rows = rows_from_json(header.at("rows"));
    const auto& adam = header.at("adam");
    s.adam.step = adam.at("step").get<std::uint64_t>();
    s.adam.beta1 = adam.at("beta1").get<Real>();
    s.adam.beta2 = adam.at("beta2").get<Real>();
    s.adam.epsilon = adam.at("epsilon").get<Real>();
    s.params = ParameterVector<Real>(r.array<Real>());
    s.initial_params = ParameterVector<Real>(r.array<Real>());
    s.adam.first_moment = r.array<Real>();
    s.adam.second_moment = r.array<Real>();
    const auto anchors = r.pod<std::uint64_t>();
    for (std::uint64_t a = 0; a < anchors; ++a) {
      EwcAnchor<Real> anchor;
      anchor.params = ParameterVector<Real>(r.array<Real>());
      anchor.fisher = r.array<Real>();
      s.anchors.push_back(std::move(anchor));
    }
    const auto count = r.pod<std::uint64_t>();
    std::vector<ImagePair<Real>> items;
    for (std::uint64_t i = 0; i < count; ++i) items.push_back(read_pair<Real>(r));
    const auto& buffer = header.at("buffer");
    s.buffer = MemoryBuffer<ImagePair<Real>>::restore(buffer.at("capacity").get<std::size_t>(), std::move(items),
                                                      buffer.at("seen").get<std::uint64_t>(),
                                                      rng_from_state(buffer.at("rng").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string(), e.what());
  }
  const auto n = s.params.size();
  if (s.initial_params.size() != n || s.adam.first_moment.size() != n || s.adam.second_moment.size() != n) {
    throw FormatError(path.string(), "inconsistent parameter block lengths");
  }
  return ckpt;
}

}  // namespace samcl
