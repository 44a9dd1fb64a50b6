#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "samcl/core/errors.hpp"
#include "samcl/taskgen/generator.hpp"

namespace samcl {

namespace io_detail {

namespace fs = std::filesystem;
using nlohmann::json;

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "float32";
  else return "uint16";
}

template <class T>
constexpr const char* extension() {
  if constexpr (std::is_same_v<T, float>) return ".f32";
  else return ".u16";
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError(path.string(), "cannot write");
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string(), std::string("malformed JSON: ") + e.what());
  }
}

/// Writes `<stem><ext>` (raw little-endian) plus `<stem>.json` with shape and dtype.
template <class T>
void write_array(const fs::path& dir, const std::string& stem, const Shape& shape, const std::vector<T>& values) {
  const fs::path data = dir / (stem + extension<T>());
  std::ofstream out(data, std::ios::binary);
  for (T v : values) {
    const T le = to_little(v);
    out.write(reinterpret_cast<const char*>(&le), sizeof(T));
  }
  if (!out) throw FormatError(data.string(), "cannot write");
  write_text(dir / (stem + ".json"), json{{"shape", shape}, {"dtype", dtype_name<T>()}}.dump() + "\n");
}

template <class T>
bool array_exists(const fs::path& dir, const std::string& stem) {
  return fs::exists(dir / (stem + extension<T>()));
}

template <class T>
std::vector<T> read_array(const fs::path& dir, const std::string& stem, Shape& shape) {
  const fs::path data = dir / (stem + extension<T>());
  const fs::path side = dir / (stem + ".json");
  const json meta = read_json(side);
  try {
    if (meta.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw FormatError(side.string(), "dtype is not " + std::string(dtype_name<T>()));
    }
    shape = meta.at("shape").get<Shape>();
  } catch (const json::exception& e) {
    throw FormatError(side.string(), e.what());
  }
  std::ifstream in(data, std::ios::binary);
  if (!in) throw FormatError(data.string(), "cannot open");
  const std::size_t count = shape_size(shape);
  std::error_code ec;
  const auto bytes = fs::file_size(data, ec);
  if (ec || bytes != count * sizeof(T)) {
    throw FormatError(data.string(), "size " + std::to_string(bytes) + " bytes, expected " +
                                         std::to_string(count * sizeof(T)) + " for shape " + shape_string(shape));
  }
  std::vector<T> out(count);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) throw FormatError(data.string(), "short read");
  for (auto& v : out) v = to_little(v);
  return out;
}

template <class Real>
void write_image(const fs::path& dir, const std::string& stem, const Tensor<Real>& t) {
  std::vector<float> v(t.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t[i]);
  write_array(dir, stem, t.shape(), v);
}

template <class Real>
Tensor<Real> read_image(const fs::path& dir, const std::string& stem, const Shape& expected) {
  Shape shape;
  const auto v = read_array<float>(dir, stem, shape);
  if (shape != expected) {
    throw FormatError((dir / (stem + ".json")).string(), "shape " + shape_string(shape) + ", expected " +
                                                             shape_string(expected));
  }
  Tensor<Real> out(shape);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<Real>(v[i]);
  return out;
}

template <class Real>
void write_points(const fs::path& dir, const std::string& stem, const std::vector<Point2<Real>>& pts) {
  std::vector<float> v;
  for (const auto& p : pts) {
    v.push_back(static_cast<float>(p.x));
    v.push_back(static_cast<float>(p.y));
  }
  write_array(dir, stem, Shape{pts.size(), 2}, v);
}

template <class Real>
std::vector<Point2<Real>> read_points(const fs::path& dir, const std::string& stem) {
  Shape shape;
  const auto v = read_array<float>(dir, stem, shape);
  if (shape.size() != 2 || shape[1] != 2) throw FormatError((dir / (stem + ".json")).string(), "landmarks must be Nx2");
  std::vector<Point2<Real>> out;
  for (std::size_t n = 0; n < shape[0]; ++n) out.push_back({static_cast<Real>(v[2 * n]), static_cast<Real>(v[2 * n + 1])});
  return out;
}

inline std::string pair_stem(const char* split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", split, index);
  return buf;
}

template <class Real>
void write_pair(const fs::path& dir, const std::string& stem, const ImagePair<Real>& pair) {
  write_image(dir, stem + "_fixed", pair.fixed);
  write_image(dir, stem + "_moving", pair.moving);
  if (pair.has_labels()) {
    write_array(dir, stem + "_fixed_labels", pair.fixed_labels->shape(), pair.fixed_labels->storage());
    write_array(dir, stem + "_moving_labels", pair.moving_labels->shape(), pair.moving_labels->storage());
  }
  if (pair.has_landmarks()) {
    write_points(dir, stem + "_fixed_landmarks", pair.fixed_landmarks);
    write_points(dir, stem + "_moving_landmarks", pair.moving_landmarks);
  }
  if (pair.true_displacement) write_image(dir, stem + "_displacement", *pair.true_displacement);
}

template <class Real>
ImagePair<Real> read_pair(const fs::path& dir, const std::string& stem, const TaskSpec& spec, int task_id) {
  const Shape grid{spec.height, spec.width};
  ImagePair<Real> pair;
  pair.task_id = task_id;
  pair.label_count = spec.label_count;
  pair.fixed = read_image<Real>(dir, stem + "_fixed", grid);
  pair.moving = read_image<Real>(dir, stem + "_moving", grid);
  for (const auto& [suffix, slot] : {std::pair{"_fixed_labels", &pair.fixed_labels},
                                     std::pair{"_moving_labels", &pair.moving_labels}}) {
    if (!array_exists<std::uint16_t>(dir, stem + suffix)) continue;
    Shape shape;
    auto v = read_array<std::uint16_t>(dir, stem + suffix, shape);
    if (shape != grid) throw FormatError((dir / (stem + suffix + ".json")).string(), "label shape mismatch");
    *slot = LabelMap(shape, std::move(v));
  }
  if (array_exists<float>(dir, stem + "_fixed_landmarks")) {
    pair.fixed_landmarks = read_points<Real>(dir, stem + "_fixed_landmarks");
    pair.moving_landmarks = read_points<Real>(dir, stem + "_moving_landmarks");
  }
  if (array_exists<float>(dir, stem + "_displacement")) {
    pair.true_displacement = read_image<Real>(dir, stem + "_displacement", Shape{2, spec.height, spec.width});
  }
  return pair;
}

}  // namespace io_detail

/// meta.json plus one subdirectory per task holding every array of every split.
template <class Real>
void save_dataset(const TaskStream<Real>& stream, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  fs::create_directories(dir);
  json tasks = json::array();
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const auto& task = stream.tasks[t];
    const fs::path sub = dir / task.spec.name;
    fs::create_directories(sub);
    const std::pair<const char*, const std::vector<ImagePair<Real>>*> splits[] = {
        {"train", &task.train}, {"val", &task.val}, {"test", &task.test}};
    for (const auto& [name, pairs] : splits) {
      for (std::size_t i = 0; i < pairs->size(); ++i) io_detail::write_pair(sub, io_detail::pair_stem(name, i), (*pairs)[i]);
    }
    tasks.push_back({{"task_id", t},
                     {"directory", task.spec.name},
                     {"counts", {{"train", task.train.size()}, {"val", task.val.size()}, {"test", task.test.size()}}},
                     {"spec", to_json(task.spec)}});
  }
  const json meta{{"format", "samcl-dataset"}, {"version", 1}, {"task_count", stream.size()}, {"tasks", tasks}};
  io_detail::write_text(dir / "meta.json", meta.dump(2) + "\n");
}

template <class Real>
TaskStream<Real> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "meta.json";
  const auto meta = io_detail::read_json(meta_path);
  TaskStream<Real> stream;
  try {
    if (meta.at("format").get<std::string>() != "samcl-dataset") throw FormatError(meta_path.string(), "unknown format");
    const auto count = meta.at("task_count").get<std::size_t>();
    const auto& tasks = meta.at("tasks");
    if (!tasks.is_array() || tasks.size() != count) {
      throw FormatError(meta_path.string(), "task_count does not match the task list");
    }
    std::size_t present = 0;
    for (const auto& entry : fs::directory_iterator(dir)) present += entry.is_directory() ? 1 : 0;
    if (present != count) {
      throw FormatError(meta_path.string(), "declares " + std::to_string(count) + " tasks but " +
                                                std::to_string(present) + " task directories are present");
    }
    for (std::size_t t = 0; t < count; ++t) {
      const auto& entry = tasks[t];
      TaskSpec spec;
      try {
        spec = task_from_json(entry.at("spec"), TaskSpec{}, "meta.tasks[" + std::to_string(t) + "]");
        spec.validate();
      } catch (const ConfigError& e) {
        throw FormatError(meta_path.string(), e.what());
      }
      const fs::path sub = dir / entry.at("directory").get<std::string>();
      if (!fs::is_directory(sub)) throw FormatError(sub.string(), "task directory missing");
      TaskData<Real> data{spec, {}, {}, {}};
      const auto& counts = entry.at("counts");
      const std::pair<const char*, std::vector<ImagePair<Real>>*> splits[] = {
          {"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
      for (const auto& [name, pairs] : splits) {
        const auto n = counts.at(name).template get<std::size_t>();
        for (std::size_t i = 0; i < n; ++i) {
          pairs->push_back(io_detail::read_pair<Real>(sub, io_detail::pair_stem(name, i), spec, int(t)));
        }
      }
      stream.tasks.push_back(std::move(data));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string(), e.what());
  }
  return stream;
}

}  // namespace samcl
