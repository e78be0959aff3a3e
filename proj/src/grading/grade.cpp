#include "tablebench/grading/grade.hpp"

#include <algorithm>

#include "tablebench/protocol/error.hpp"

namespace tb::grading {

namespace {
constexpr int kMaxSuccessiveRetries = 4;
}

RolloutGrade::RolloutGrade(TaskRubric rubric)
    : rubric_(std::move(rubric)), stages_(rubric_.stages().size()) {}

RolloutGrade start_rollout(TaskRubric rubric) { return RolloutGrade(std::move(rubric)); }

void RolloutGrade::require_live() const {
  if (finalized()) throw Error(ErrorCode::kConflict, "rollout already finalized");
  if (terminated()) throw Error(ErrorCode::kConflict, "rollout already terminated");
}

void RolloutGrade::mark_stage_complete(int stage_index) {
  require_live();
  const int n = rubric_.stage_count();
  if (stage_index < 0 || stage_index >= n) {
    throw Error(ErrorCode::kInvalidArgument, "stage index out of range");
  }
  if (stage_index < current_stage_) {
    throw Error(ErrorCode::kConflict, "stage " + std::to_string(stage_index) + " already passed");
  }
  for (int s = current_stage_; s < stage_index; ++s) {
    if (rubric_.stages()[static_cast<std::size_t>(s)].critical) {
      throw Error(ErrorCode::kConflict, "stage " + std::to_string(stage_index) +
                                            " cannot complete before critical stage " +
                                            std::to_string(s));
    }
  }
  for (int s = current_stage_; s < stage_index; ++s) stages_[static_cast<std::size_t>(s)].skipped = true;
  auto& st = stages_[static_cast<std::size_t>(stage_index)];
  st.completed = true;
  st.successive_failed_retries = 0;
  current_stage_ = stage_index + 1;
  log_.push_back({GradeEvent{GradeEventType::kStageComplete, stage_index, std::nullopt}, 0});
  if (current_stage_ == n) terminate(TerminationReason::kCompleted);
}

void RolloutGrade::record_retry() {
  require_live();
  const auto idx = static_cast<std::size_t>(current_stage_);
  auto& st = stages_[idx];
  st.retries += 1;
  st.successive_failed_retries += 1;
  log_.push_back({GradeEvent{GradeEventType::kRetry, std::nullopt, std::nullopt}, 0});
  // Each retry is one half point.
  if (rubric_.stages()[idx].half_points - st.retries < 0) {
    terminate(TerminationReason::kStageScoreNegative);
  } else if (st.successive_failed_retries > kMaxSuccessiveRetries) {
    terminate(TerminationReason::kRetryLimit);
  }
}

RolloutResult RolloutGrade::finalize(TerminationReason reason, std::int64_t duration_ms) {
  if (result_) return *result_;
  if (!terminated()) terminate(reason);
  log_.push_back({GradeEvent{GradeEventType::kFinalize, std::nullopt, reason}, duration_ms});
  result_ = RolloutResult{success(), progress_score(), *reason_, duration_ms};
  return *result_;
}

void RolloutGrade::apply(const GradeEvent& event, std::int64_t duration_ms) {
  switch (event.type) {
    case GradeEventType::kStageComplete:
      if (!event.stage) throw Error(ErrorCode::kInvalidArgument, "stage_complete needs a stage");
      mark_stage_complete(*event.stage);
      return;
    case GradeEventType::kRetry:
      record_retry();
      return;
    case GradeEventType::kFinalize:
      finalize(event.reason.value_or(TerminationReason::kManual), duration_ms);
      return;
  }
}

int RolloutGrade::progress_half_points() const {
  int total = 0;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (stages_[i].completed) {
      total += std::max(0, rubric_.stages()[i].half_points - stages_[i].retries);
    }
  }
  return total;
}

bool RolloutGrade::success() const {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (rubric_.stages()[i].critical && !stages_[i].completed) return false;
  }
  return true;
}

RolloutGrade RolloutGrade::replay(TaskRubric rubric, std::span<const LoggedEvent> events) {
  RolloutGrade grade(std::move(rubric));
  for (const auto& e : events) grade.apply(e.event, e.duration_ms);
  return grade;
}

TaskTotals task_totals(std::span<const RolloutResult> results) {
  if (results.size() != static_cast<std::size_t>(kRolloutsPerEval)) {
    throw Error(ErrorCode::kInvalidArgument, "task totals need exactly " +
                                                 std::to_string(kRolloutsPerEval) + " rollouts, got " +
                                                 std::to_string(results.size()));
  }
  TaskTotals totals;
  for (const auto& r : results) {
    if (r.success) totals.success_rate += 100 / kRolloutsPerEval;
    totals.task_score += r.progress_score;
  }
  return totals;
}

}  // namespace tb::grading
