#include "tablebench/grading/rubric.hpp"

#include <cmath>

#include "tablebench/protocol/error.hpp"

namespace tb::grading {

StageSpec TaskRubric::stage(std::string name, double points, bool critical) {
  const double doubled = points * 2.0;
  if (!std::isfinite(points) || points < 0.0 || doubled != std::floor(doubled)) {
    throw Error(ErrorCode::kInvalidArgument,
                "stage '" + name + "' points must be a non-negative multiple of 0.5");
  }
  return StageSpec{std::move(name), static_cast<int>(doubled), critical};
}

TaskRubric::TaskRubric(std::string task_id, std::vector<StageSpec> stages)
    : task_id_(std::move(task_id)), stages_(std::move(stages)) {
  if (stages_.empty()) throw Error(ErrorCode::kInvalidArgument, "rubric has no stages");
  int total = 0;
  bool any_critical = false;
  for (const auto& s : stages_) {
    if (s.half_points < 0) throw Error(ErrorCode::kInvalidArgument, "negative stage points");
    total += s.half_points;
    any_critical = any_critical || s.critical;
  }
  if (total != kRolloutHalfPoints) {
    throw Error(ErrorCode::kInvalidArgument, "rubric points sum to " + std::to_string(total / 2.0) +
                                                 ", expected 10");
  }
  if (!any_critical) throw Error(ErrorCode::kInvalidArgument, "rubric needs a critical stage");
}

TaskRubric open_the_drawer_rubric() {
  return TaskRubric("open_the_drawer",
                    {TaskRubric::stage("Arm reaches the drawer region", 2, true),
                     TaskRubric::stage("Grabber is rotated towards the handle", 3, true),
                     TaskRubric::stage("The drawer is pulled open", 4, true),
                     TaskRubric::stage("Arm goes back to its original position", 1, false)});
}

}  // namespace tb::grading
