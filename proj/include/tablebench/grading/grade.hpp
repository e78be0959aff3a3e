#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tablebench/grading/rubric.hpp"
#include "tablebench/protocol/types.hpp"

namespace tb::grading {

struct StageProgress {
  bool completed = false;
  bool skipped = false;
  int retries = 0;
  int successive_failed_retries = 0;

  bool operator==(const StageProgress&) const = default;
};

// One accepted event. duration_ms is only meaningful for finalize.
struct LoggedEvent {
  GradeEvent event;
  std::int64_t duration_ms = 0;

  bool operator==(const LoggedEvent&) const = default;
};

// Live grading state for one rollout.
//
// Rules:
//  - stages complete in rubric order; a run of non-critical stages directly
//    ahead of the current one may be skipped by completing the stage after it
//  - a retry costs 0.5 on the current stage; the rollout terminates when that
//    stage's net score would go negative, or on the fifth successive retry
//  - a completed stage contributes max(0, points - 0.5 * retries); an
//    uncompleted stage contributes nothing
//  - success iff every critical stage completed
// Rejected events throw Error and leave the grade untouched.
class RolloutGrade {
 public:
  explicit RolloutGrade(TaskRubric rubric);

  void mark_stage_complete(int stage_index);
  void record_retry();
  // Ends the rollout. A live grade terminates with `reason`; an already
  // terminated grade keeps its own reason. Idempotent after the first call.
  RolloutResult finalize(TerminationReason reason, std::int64_t duration_ms);
  void apply(const GradeEvent& event, std::int64_t duration_ms = 0);

  const TaskRubric& rubric() const { return rubric_; }
  const std::vector<StageProgress>& stages() const { return stages_; }
  int current_stage() const { return current_stage_; }
  bool terminated() const { return reason_.has_value(); }
  bool finalized() const { return result_.has_value(); }
  std::optional<TerminationReason> termination_reason() const { return reason_; }
  const std::vector<LoggedEvent>& events() const { return log_; }
  const std::optional<RolloutResult>& result() const { return result_; }

  int progress_half_points() const;
  double progress_score() const { return progress_half_points() / 2.0; }
  bool success() const;

  static RolloutGrade replay(TaskRubric rubric, std::span<const LoggedEvent> events);

 private:
  void require_live() const;
  void terminate(TerminationReason reason) { reason_ = reason; }

  TaskRubric rubric_;
  std::vector<StageProgress> stages_;
  int current_stage_ = 0;
  std::optional<TerminationReason> reason_;
  std::optional<RolloutResult> result_;
  std::vector<LoggedEvent> log_;
};

// Convenience wrappers matching the grading protocol's operation names.
RolloutGrade start_rollout(TaskRubric rubric);

struct TaskTotals {
  // Percent, a multiple of 10.
  int success_rate = 0;
  // Out of 100: the sum of ten 10-point rollout scores.
  double task_score = 0.0;

  bool operator==(const TaskTotals&) const = default;
};

TaskTotals task_totals(std::span<const RolloutResult> results);

}  // namespace tb::grading
