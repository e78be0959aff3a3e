#include "tablebench/sim/task.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "tablebench/sim/detect.hpp"

namespace tb::sim {
namespace {

Range range_of(const Json& j, std::string_view key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return {fallback, fallback};
  if (it->is_number()) {
    const double v = it->get<double>();
    return {v, v};
  }
  const auto a = it->get<std::array<double, 2>>();
  if (a[0] > a[1]) throw ShapeError("/" + std::string(key), "range with lo <= hi");
  return {a[0], a[1]};
}

Eigen::Vector3d vec3(const Json& j) {
  const auto a = j.get<std::array<double, 3>>();
  return {a[0], a[1], a[2]};
}

ObjectTemplate parse_object(const Json& j) {
  ObjectTemplate t;
  t.object_id = field<std::string>(j, "id");
  const auto shape = parse_shape(field<std::string>(j, "shape"));
  if (!shape) throw ShapeError("/shape", "box, cylinder or sphere");
  t.shape = *shape;
  t.size = vec3(j.at("size"));
  t.color = field<std::array<std::uint8_t, 3>>(j, "color");
  t.anchor = optional_field<std::string>(j, "anchor");
  if (t.anchor) {
    t.offset = vec3(j.at("offset"));
  } else {
    t.x = range_of(j, "x", 0.0);
    t.y = range_of(j, "y", 0.0);
  }
  t.yaw = range_of(j, "yaw", 0.0);
  t.graspable = optional_field<bool>(j, "graspable").value_or(true);
  if (auto it = j.find("slider"); it != j.end()) {
    t.slide_axis = vec3(it->at("axis")).normalized();
    t.slide_travel = it->at("travel").get<double>();
  }
  return t;
}

double sample(std::mt19937_64& rng, Range r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

bool TaskDescriptor::supports(Archetype archetype) const {
  return std::find(archetypes.begin(), archetypes.end(), archetype) != archetypes.end();
}

TaskDescriptor parse_task(const Json& doc) {
  try {
    TaskDescriptor t;
    t.task_id = field<std::string>(doc, "task_id");
    t.prompt = field<std::string>(doc, "prompt");
    for (const auto& name : field<std::vector<std::string>>(doc, "archetypes")) {
      const auto a = parse_archetype(name);
      if (!a) throw ShapeError("/archetypes", "known archetype, got '" + name + "'");
      t.archetypes.push_back(*a);
    }
    t.time_budget_s = optional_field<double>(doc, "time_budget_s").value_or(60.0);
    if (auto table = optional_field<std::array<double, 4>>(doc, "table")) {
      t.table = {(*table)[0], (*table)[1], (*table)[2], (*table)[3]};
    }
    std::vector<std::string> seen;
    for (const auto& o : doc.at("objects")) {
      auto obj = parse_object(o);
      if (std::find(seen.begin(), seen.end(), obj.object_id) != seen.end()) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate object id " + obj.object_id);
      }
      if (obj.anchor && std::find(seen.begin(), seen.end(), *obj.anchor) == seen.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "object " + obj.object_id + " anchors to " + *obj.anchor + ", which must be listed first");
      }
      seen.push_back(obj.object_id);
      t.objects.push_back(std::move(obj));
    }
    std::vector<grading::StageSpec> stages;
    for (const auto& s : doc.at("rubric")) {
      stages.push_back(grading::TaskRubric::stage(field<std::string>(s, "name"), field<double>(s, "points"),
                                                  field<bool>(s, "critical")));
    }
    t.rubric = grading::TaskRubric(t.task_id, std::move(stages));
    if (has_detectors(t.task_id) && detector_count(t.task_id) != t.rubric.stage_count()) {
      throw Error(ErrorCode::kInvalidArgument, "rubric for " + t.task_id + " has " +
                                                   std::to_string(t.rubric.stage_count()) +
                                                   " stages but the built-in detectors cover " +
                                                   std::to_string(detector_count(t.task_id)));
    }
    return t;
  } catch (const ShapeError& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("task descriptor: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("task descriptor: ") + e.what());
  }
}

TaskDescriptor load_task_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_task(parse_json(text));
}

TaskCatalog TaskCatalog::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kNotFound, "no task directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  TaskCatalog catalog;
  for (const auto& f : files) catalog.add(load_task_file(f));
  return catalog;
}

void TaskCatalog::add(TaskDescriptor task) {
  const std::string id = task.task_id;
  if (!tasks_.emplace(id, std::move(task)).second) throw Error(ErrorCode::kConflict, "duplicate task " + id);
}

bool TaskCatalog::contains(std::string_view task_id) const { return tasks_.find(task_id) != tasks_.end(); }

const TaskDescriptor& TaskCatalog::get(std::string_view task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw Error(ErrorCode::kNotFound, "unknown task " + std::string(task_id));
  return it->second;
}

std::vector<std::string> TaskCatalog::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : tasks_) out.push_back(id);
  return out;
}

SceneState randomized_scene(const TaskDescriptor& task, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneState scene;
  scene.task_id = task.task_id;
  scene.table = task.table;
  scene.rng_seed = seed;
  for (const auto& t : task.objects) {
    SceneObject o;
    o.object_id = t.object_id;
    o.shape = t.shape;
    o.size = t.size;
    o.color = t.color;
    o.graspable = t.graspable;
    if (t.anchor) {
      o.position = scene.find(*t.anchor)->position + t.offset;
    } else {
      const double x = sample(rng, t.x);
      const double y = sample(rng, t.y);
      o.position = {x, y, t.size.z() / 2};
    }
    o.yaw = sample(rng, t.yaw);
    if (t.slide_axis) o.slider = Slider{*t.slide_axis, o.position, t.slide_travel};
    scene.objects.push_back(std::move(o));
  }
  return scene;
}

SceneState restored_scene(const TaskDescriptor& task, const SceneState& recorded) {
  if (recorded.task_id != task.task_id) {
    throw Error(ErrorCode::kInvalidArgument, "recorded scene belongs to task " + recorded.task_id);
  }
  if (recorded.objects.size() != task.objects.size()) {
    throw Error(ErrorCode::kInvalidArgument, "recorded scene has a different object roster");
  }
  for (std::size_t i = 0; i < task.objects.size(); ++i) {
    if (recorded.objects[i].object_id != task.objects[i].object_id) {
      throw Error(ErrorCode::kInvalidArgument, "recorded scene has a different object roster");
    }
  }
  const auto problems = check_scene(recorded);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidArgument, problems.front());
  return recorded;
}

}  // namespace tb::sim
