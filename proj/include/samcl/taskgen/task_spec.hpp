#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "samcl/core/rng.hpp"
#include "samcl/eval/result_matrix.hpp"
#include "samcl/reg/objective.hpp"

namespace samcl {

/// Synthetic stand-ins for the four clinical registration tasks.
enum class TaskFamily {
  mono_brainlike,           // nested brain-like structures, one contrast
  mono_multiorgan,          // abdominal organs rendered as windowed CT
  mono_lunglike_landmarks,  // lungs with vessel landmarks, windowed CT
  cross_modality            // abdominal anatomy, CT fixed vs inverted MR-like moving
};

inline std::string to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::mono_brainlike: return "mono_brainlike";
    case TaskFamily::mono_multiorgan: return "mono_multiorgan";
    case TaskFamily::mono_lunglike_landmarks: return "mono_lunglike_landmarks";
    case TaskFamily::cross_modality: return "cross_modality";
  }
  return "?";
}

inline TaskFamily parse_family(const std::string& s) {
  for (auto f : {TaskFamily::mono_brainlike, TaskFamily::mono_multiorgan, TaskFamily::mono_lunglike_landmarks,
                 TaskFamily::cross_modality}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown task family '" + s + "'");
}

inline std::string to_string(Dissimilarity d) {
  switch (d) {
    case Dissimilarity::lncc: return "lncc";
    case Dissimilarity::lncc_plus_dice: return "lncc_plus_dice";
    case Dissimilarity::lncc_plus_tre: return "lncc_plus_tre";
  }
  return "?";
}

inline Dissimilarity parse_dissimilarity(const std::string& s) {
  for (auto d : {Dissimilarity::lncc, Dissimilarity::lncc_plus_dice, Dissimilarity::lncc_plus_tre}) {
    if (to_string(d) == s) return d;
  }
  throw ConfigError("unknown dissimilarity '" + s + "'");
}

struct TaskSpec {
  std::string name;
  TaskFamily family = TaskFamily::mono_brainlike;
  std::size_t n_train = 40;
  std::size_t n_val = 5;
  std::size_t n_test = 10;
  std::size_t height = 64;
  std::size_t width = 64;
  double deformation = 3.0;  // max |v| of the ground-truth velocity, pixels
  double smoothness = 0.0;   // Gaussian sigma of the velocity, pixels; 0 = height / 8
  std::size_t label_count = 5;
  std::size_t landmark_count = 0;
  double texture = 0.05;     // std of the smooth intensity texture
  std::array<double, 2> ct_window{-200.0, 300.0};  // HU clip before [0,1] normalisation
  LossSpec loss;
  std::uint64_t seed = 0;

  [[nodiscard]] bool uses_landmarks() const { return family == TaskFamily::mono_lunglike_landmarks; }
  [[nodiscard]] MetricKind metric() const { return uses_landmarks() ? MetricKind::tre_down_mm : MetricKind::dice_up; }
  [[nodiscard]] double velocity_sigma() const { return smoothness > 0 ? smoothness : static_cast<double>(height) / 8.0; }

  void validate() const {
    if (name.empty()) throw ConfigError("task: name must not be empty");
    if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("task '" + name + "': split sizes must be >= 1");
    if (height < 8 || width < 8) throw ConfigError("task '" + name + "': grid must be at least 8x8");
    if (!(deformation >= 0)) throw ConfigError("task '" + name + "': deformation must be >= 0");
    if (!(texture >= 0)) throw ConfigError("task '" + name + "': texture must be >= 0");
    if (!(ct_window[1] > ct_window[0])) throw ConfigError("task '" + name + "': ct_window must be increasing");
    if (uses_landmarks() && landmark_count < 1) throw ConfigError("task '" + name + "': landmark family needs landmarks");
    if (label_count < 2) throw ConfigError("task '" + name + "': label_count must be >= 2");
    loss.validate();
    const bool wants_tre = loss.dissimilarity == Dissimilarity::lncc_plus_tre;
    if (wants_tre && !uses_landmarks()) throw ConfigError("task '" + name + "': lncc_plus_tre needs a landmark family");
  }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

namespace json_detail {

using nlohmann::json;

/// Rejects keys outside `allowed`.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace json_detail

inline nlohmann::json to_json(const LossSpec& s) {
  return {{"dissimilarity", to_string(s.dissimilarity)},
          {"lncc_window", s.lncc_window},
          {"lncc_weight", s.lncc_weight},
          {"dice_weight", s.dice_weight},
          {"tre_weight", s.tre_weight},
          {"membrane_weight", s.membrane_weight},
          {"bending_weight", s.bending_weight},
          {"spacing", s.spacing}};
}

inline LossSpec loss_from_json(const nlohmann::json& j, LossSpec s, const std::string& where) {
  using namespace json_detail;
  check_keys(j, {"dissimilarity", "lncc_window", "lncc_weight", "dice_weight", "tre_weight", "membrane_weight",
                 "bending_weight", "spacing"},
             where);
  std::string dissimilarity = to_string(s.dissimilarity);
  read(j, "dissimilarity", dissimilarity, where);
  s.dissimilarity = parse_dissimilarity(dissimilarity);
  read(j, "lncc_window", s.lncc_window, where);
  read(j, "lncc_weight", s.lncc_weight, where);
  read(j, "dice_weight", s.dice_weight, where);
  read(j, "tre_weight", s.tre_weight, where);
  read(j, "membrane_weight", s.membrane_weight, where);
  read(j, "bending_weight", s.bending_weight, where);
  read(j, "spacing", s.spacing, where);
  return s;
}

inline nlohmann::json to_json(const TaskSpec& t) {
  return {{"name", t.name},
          {"family", to_string(t.family)},
          {"n_train", t.n_train},
          {"n_val", t.n_val},
          {"n_test", t.n_test},
          {"height", t.height},
          {"width", t.width},
          {"deformation", t.deformation},
          {"smoothness", t.smoothness},
          {"label_count", t.label_count},
          {"landmark_count", t.landmark_count},
          {"texture", t.texture},
          {"ct_window", t.ct_window},
          {"loss", to_json(t.loss)},
          {"seed", t.seed},
          {"annotation", t.uses_landmarks() ? "landmarks" : "labels"},
          {"metric", to_string(t.metric())}};
}

/// Overlays the keys present in `j` onto `t`.
inline TaskSpec task_from_json(const nlohmann::json& j, TaskSpec t, const std::string& where) {
  using namespace json_detail;
  check_keys(j, {"name", "family", "n_train", "n_val", "n_test", "height", "width", "deformation", "smoothness",
                 "label_count", "landmark_count", "texture", "ct_window", "loss", "seed", "annotation", "metric"},
             where);
  read(j, "name", t.name, where);
  std::string family = to_string(t.family);
  read(j, "family", family, where);
  t.family = parse_family(family);
  read(j, "n_train", t.n_train, where);
  read(j, "n_val", t.n_val, where);
  read(j, "n_test", t.n_test, where);
  read(j, "height", t.height, where);
  read(j, "width", t.width, where);
  read(j, "deformation", t.deformation, where);
  read(j, "smoothness", t.smoothness, where);
  read(j, "label_count", t.label_count, where);
  read(j, "landmark_count", t.landmark_count, where);
  read(j, "texture", t.texture, where);
  read(j, "ct_window", t.ct_window, where);
  read(j, "seed", t.seed, where);
  if (j.contains("loss")) t.loss = loss_from_json(j.at("loss"), t.loss, where + ".loss");
  return t;
}

/// Four-task stream mirroring brain MR, abdomen CT, lung CT (landmarks) and abdomen MR-CT.
inline std::vector<TaskSpec> default_tasks(std::uint64_t master_seed, std::size_t height = 64, std::size_t width = 64) {
  std::vector<TaskSpec> tasks(4);
  tasks[0].name = "brain";
  tasks[0].family = TaskFamily::mono_brainlike;
  tasks[0].label_count = 5;
  tasks[0].deformation = 3.0;
  tasks[0].loss.dissimilarity = Dissimilarity::lncc_plus_dice;

  tasks[1].name = "abdomen_ct";
  tasks[1].family = TaskFamily::mono_multiorgan;
  tasks[1].label_count = 6;
  tasks[1].deformation = 4.0;
  tasks[1].loss.dissimilarity = Dissimilarity::lncc_plus_dice;

  tasks[2].name = "lung_ct";
  tasks[2].family = TaskFamily::mono_lunglike_landmarks;
  tasks[2].landmark_count = 6;
  tasks[2].label_count = 3 + tasks[2].landmark_count;
  tasks[2].deformation = 3.0;
  tasks[2].loss.dissimilarity = Dissimilarity::lncc_plus_tre;

  tasks[3].name = "abdomen_mrct";
  tasks[3].family = TaskFamily::cross_modality;
  tasks[3].label_count = 6;
  tasks[3].deformation = 3.0;
  tasks[3].loss.dissimilarity = Dissimilarity::lncc_plus_dice;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    tasks[i].height = height;
    tasks[i].width = width;
    tasks[i].seed = derive_seed(master_seed, 100 + i);
  }
  return tasks;
}

}  // namespace samcl
