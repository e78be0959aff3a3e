#include "tablebench/sim/detect.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "tablebench/protocol/error.hpp"

namespace tb::sim {
namespace {

using Detector = std::function<bool(const SimSnapshot&)>;

const SceneObject& object(const SimSnapshot& s, std::string_view id) {
  const auto* o = s.scene.find(id);
  if (!o) throw Error(ErrorCode::kInvalidArgument, "scene lacks object " + std::string(id));
  return *o;
}

double horizontal(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return (a - b).head<2>().norm(); }

bool lifted(const SimSnapshot& s, std::string_view id) {
  const auto& o = object(s, id);
  return is_held(s, id) && o.bottom() >= 0.02;
}

bool retracted_above(const SimSnapshot& s, std::string_view id) {
  const auto& o = object(s, id);
  return !is_held(s, id) && s.ee[0].z() >= o.top() + 0.05;
}

const std::map<std::string, std::vector<Detector>, std::less<>>& registry() {
  static const std::map<std::string, std::vector<Detector>, std::less<>> table = {
      {"stack_color_blocks",
       {
           [](const SimSnapshot& s) { return lifted(s, "red_block"); },
           [](const SimSnapshot& s) { return rests_on(s, "red_block", "blue_block", 0.01); },
           [](const SimSnapshot& s) { return retracted_above(s, "red_block"); },
       }},
      {"open_the_drawer",
       {
           [](const SimSnapshot& s) {
             const auto& h = object(s, "handle");
             return horizontal(s.ee[0], h.position) <= 0.08 && s.ee[0].z() <= h.top() + 0.10;
           },
           [](const SimSnapshot& s) { return is_held(s, "handle"); },
           [](const SimSnapshot& s) { return object(s, "handle").extension() >= 0.08; },
           [](const SimSnapshot& s) {
             return !is_held(s, "handle") && (s.ee[0] - s.home_ee[0]).norm() <= 0.03;
           },
       }},
      {"put_cup_on_coaster",
       {
           [](const SimSnapshot& s) { return lifted(s, "cup"); },
           [](const SimSnapshot& s) { return rests_on(s, "cup", "coaster", 0.02); },
           [](const SimSnapshot& s) { return retracted_above(s, "cup"); },
       }},
  };
  return table;
}

}  // namespace

bool is_held(const SimSnapshot& s, std::string_view object_id) {
  for (const auto& h : s.held) {
    if (h && *h == object_id) return true;
  }
  return false;
}

bool rests_on(const SimSnapshot& s, std::string_view top, std::string_view bottom, double xy_tolerance) {
  const auto& a = object(s, top);
  const auto& b = object(s, bottom);
  return !is_held(s, top) && horizontal(a.position, b.position) <= xy_tolerance &&
         std::abs(a.bottom() - b.top()) <= 0.002;
}

bool has_detectors(std::string_view task_id) { return registry().count(task_id) > 0; }

int detector_count(std::string_view task_id) {
  auto it = registry().find(task_id);
  return it == registry().end() ? 0 : static_cast<int>(it->second.size());
}

bool detect_stage(std::string_view task_id, int stage_index, const SimSnapshot& snapshot) {
  auto it = registry().find(task_id);
  if (it == registry().end()) {
    throw Error(ErrorCode::kNotFound, "task " + std::string(task_id) + " has no detectors; grade it by hand");
  }
  if (stage_index < 0 || stage_index >= static_cast<int>(it->second.size())) {
    throw Error(ErrorCode::kInvalidArgument, "stage index out of range");
  }
  return it->second[static_cast<std::size_t>(stage_index)](snapshot);
}

}  // namespace tb::sim
