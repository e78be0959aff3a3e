#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tablebench/grading/rubric.hpp"
#include "tablebench/sim/scene.hpp"

namespace tb::sim {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// How one object is placed at reset. Anchored objects take the anchor's
// sampled position plus `offset` instead of sampling their own.
struct ObjectTemplate {
  std::string object_id;
  Shape shape = Shape::kBox;
  Eigen::Vector3d size = Eigen::Vector3d::Constant(0.05);
  std::array<std::uint8_t, 3> color{200, 200, 200};
  Range x;
  Range y;
  Range yaw;
  std::optional<std::string> anchor;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  bool graspable = true;
  std::optional<Eigen::Vector3d> slide_axis;
  double slide_travel = 0.0;
};

struct TaskDescriptor {
  std::string task_id;
  std::string prompt;
  std::vector<Archetype> archetypes;
  double time_budget_s = 60.0;
  TableBounds table;
  std::vector<ObjectTemplate> objects;
  grading::TaskRubric rubric{"", {grading::TaskRubric::stage("done", 10, true)}};

  bool supports(Archetype archetype) const;
};

// Parses a task descriptor document; see docs/task_schema.md.
TaskDescriptor parse_task(const Json& doc);
TaskDescriptor load_task_file(const std::filesystem::path& path);

class TaskCatalog {
 public:
  // Loads every *.json file in `dir`.
  static TaskCatalog load_dir(const std::filesystem::path& dir);

  void add(TaskDescriptor task);
  bool contains(std::string_view task_id) const;
  const TaskDescriptor& get(std::string_view task_id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, TaskDescriptor, std::less<>> tasks_;
};

// Samples every free object uniformly within its ranges from `seed`.
SceneState randomized_scene(const TaskDescriptor& task, std::uint64_t seed);

// Restores recorded object poses after checking they belong to `task`.
SceneState restored_scene(const TaskDescriptor& task, const SceneState& recorded);

}  // namespace tb::sim
