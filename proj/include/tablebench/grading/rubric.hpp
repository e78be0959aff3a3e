#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tb::grading {

inline constexpr int kRolloutsPerEval = 10;
// Progress points per rollout, in half-point units.
inline constexpr int kRolloutHalfPoints = 20;

struct StageSpec {
  std::string name;
  // Points are kept as a count of half points so every deduction stays exact.
  int half_points = 0;
  bool critical = true;

  double points() const { return half_points / 2.0; }
  bool operator==(const StageSpec&) const = default;
};

// Ordered stage list whose points sum to exactly 10 with at least one critical
// stage. Construction validates; an invalid rubric never exists.
class TaskRubric {
 public:
  TaskRubric(std::string task_id, std::vector<StageSpec> stages);

  // Points given as decimals (2, 3.5, ...); each must be a non-negative multiple of 0.5.
  static StageSpec stage(std::string name, double points, bool critical);

  const std::string& task_id() const { return task_id_; }
  const std::vector<StageSpec>& stages() const { return stages_; }
  int stage_count() const { return static_cast<int>(stages_.size()); }
  int rollouts_per_eval() const { return kRolloutsPerEval; }

  bool operator==(const TaskRubric&) const = default;

 private:
  std::string task_id_;
  std::vector<StageSpec> stages_;
};

// The four-stage drawer rubric used as the worked example for the grading rules.
TaskRubric open_the_drawer_rubric();

}  // namespace tb::grading
