#include <doctest.h>

#include <random>

#include "support/grading_oracle.hpp"
#include "tablebench/grading/grade.hpp"
#include "tablebench/protocol/error.hpp"

using namespace tb;
using namespace tb::grading;

namespace {

TaskRubric single_stage_rubric(double first_points) {
  return TaskRubric("t", {TaskRubric::stage("a", first_points, true),
                          TaskRubric::stage("b", 10.0 - first_points, true)});
}

}  // namespace

TEST_CASE("start_rollout validates the rubric") {
  SUBCASE("drawer rubric starts fresh") {
    auto g = start_rollout(open_the_drawer_rubric());
    CHECK(g.current_stage() == 0);
    CHECK_FALSE(g.terminated());
    CHECK(g.progress_score() == 0.0);
  }
  SUBCASE("points summing to 9.5 are rejected") {
    CHECK_THROWS_AS(TaskRubric("t", {TaskRubric::stage("a", 5, true), TaskRubric::stage("b", 4.5, true)}),
                    Error);
  }
  SUBCASE("zero critical stages are rejected") {
    CHECK_THROWS_AS(TaskRubric("t", {TaskRubric::stage("a", 5, false), TaskRubric::stage("b", 5, false)}),
                    Error);
  }
  SUBCASE("points must be multiples of 0.5") {
    CHECK_THROWS_AS(TaskRubric::stage("a", 2.25, true), Error);
    CHECK_THROWS_AS(TaskRubric::stage("a", -1, true), Error);
  }
}

TEST_CASE("mark_stage_complete on the drawer rubric") {
  auto g = start_rollout(open_the_drawer_rubric());
  SUBCASE("all stages clean") {
    for (int s = 0; s < 4; ++s) g.mark_stage_complete(s);
    CHECK(g.terminated());
    CHECK(g.termination_reason() == TerminationReason::kCompleted);
    const auto r = g.finalize(TerminationReason::kManual, 1000);
    CHECK(r.success);
    CHECK(r.progress_score == 10.0);
    CHECK(r.terminated_reason == TerminationReason::kCompleted);
  }
  SUBCASE("critical stages only") {
    for (int s = 0; s < 3; ++s) g.mark_stage_complete(s);
    const auto r = g.finalize(TerminationReason::kManual, 1000);
    CHECK(r.success);
    CHECK(r.progress_score == 9.0);
  }
  SUBCASE("out-of-order completion rejected") {
    g.mark_stage_complete(0);
    CHECK_THROWS_AS(g.mark_stage_complete(2), Error);
    CHECK(g.current_stage() == 1);
    CHECK(g.events().size() == 1);
  }
  SUBCASE("completion after termination rejected") {
    for (int s = 0; s < 4; ++s) g.mark_stage_complete(s);
    CHECK_THROWS_AS(g.mark_stage_complete(3), Error);
  }
}

TEST_CASE("non-critical stages may be skipped") {
  TaskRubric r("t", {TaskRubric::stage("a", 2, true), TaskRubric::stage("opt", 3, false),
                     TaskRubric::stage("c", 5, true)});
  auto g = start_rollout(r);
  g.mark_stage_complete(0);
  g.mark_stage_complete(2);
  CHECK(g.stages()[1].skipped);
  CHECK_FALSE(g.stages()[1].completed);
  const auto res = g.finalize(TerminationReason::kManual, 0);
  CHECK(res.success);
  CHECK(res.progress_score == 7.0);
}

TEST_CASE("record_retry termination rules") {
  SUBCASE("2-point stage: four retries survive, the fifth terminates") {
    auto g = start_rollout(single_stage_rubric(2));
    for (int i = 0; i < 4; ++i) g.record_retry();
    CHECK_FALSE(g.terminated());
    g.record_retry();
    CHECK(g.terminated());
    // Both rules fire; the negative-score rule is checked first.
    CHECK(g.termination_reason() == TerminationReason::kStageScoreNegative);
    CHECK_THROWS_AS(g.record_retry(), Error);
  }
  SUBCASE("4-point stage: the fifth retry hits the successive limit") {
    auto g = start_rollout(single_stage_rubric(4));
    for (int i = 0; i < 5; ++i) g.record_retry();
    CHECK(g.termination_reason() == TerminationReason::kRetryLimit);
  }
  SUBCASE("1-point stage: the third retry goes negative") {
    auto g = start_rollout(single_stage_rubric(1));
    g.record_retry();
    g.record_retry();
    CHECK_FALSE(g.terminated());
    g.record_retry();
    CHECK(g.termination_reason() == TerminationReason::kStageScoreNegative);
  }
  SUBCASE("two retries then completion of a 3-point stage contribute 2.0") {
    auto g = start_rollout(single_stage_rubric(3));
    g.record_retry();
    g.record_retry();
    g.mark_stage_complete(0);
    CHECK(g.progress_score() == 2.0);
    CHECK(g.stages()[0].successive_failed_retries == 0);
  }
}

TEST_CASE("finalize_rollout") {
  SUBCASE("terminated at stage 0 after five retries scores zero") {
    auto g = start_rollout(open_the_drawer_rubric());
    for (int i = 0; i < 5; ++i) g.record_retry();
    const auto r = g.finalize(TerminationReason::kManual, 10);
    CHECK_FALSE(r.success);
    CHECK(r.progress_score == 0.0);
  }
  SUBCASE("one retry on stage 2 with everything complete") {
    auto g = start_rollout(open_the_drawer_rubric());
    g.mark_stage_complete(0);
    g.mark_stage_complete(1);
    g.record_retry();
    g.mark_stage_complete(2);
    g.mark_stage_complete(3);
    const auto r = g.finalize(TerminationReason::kManual, 10);
    CHECK(r.success);
    CHECK(r.progress_score == 9.5);
  }
  SUBCASE("failing the last critical step keeps a high score") {
    auto g = start_rollout(open_the_drawer_rubric());
    g.mark_stage_complete(0);
    g.mark_stage_complete(1);
    const auto r = g.finalize(TerminationReason::kManual, 10);
    CHECK_FALSE(r.success);
    CHECK(r.progress_score == 5.0);
  }
  SUBCASE("second finalize returns the first result") {
    auto g = start_rollout(open_the_drawer_rubric());
    const auto a = g.finalize(TerminationReason::kManual, 10);
    const auto b = g.finalize(TerminationReason::kCompleted, 99);
    CHECK(a == b);
    CHECK(g.events().size() == 1);
    CHECK_THROWS_AS(g.record_retry(), Error);
  }
}

TEST_CASE("task_totals") {
  std::vector<RolloutResult> perfect(10, RolloutResult{true, 10.0, TerminationReason::kCompleted, 0});
  CHECK(task_totals(perfect) == TaskTotals{100, 100.0});

  std::vector<RolloutResult> zero(10, RolloutResult{false, 0.0, TerminationReason::kManual, 0});
  CHECK(task_totals(zero) == TaskTotals{0, 0.0});

  // Ten successes with a single 0.5 deduction in total reproduce SR 100 / score 99.5.
  auto bowls = perfect;
  bowls[3].progress_score = 9.5;
  CHECK(task_totals(bowls) == TaskTotals{100, 99.5});

  CHECK_THROWS_AS(task_totals(std::span(perfect).first(9)), Error);
}

TEST_CASE("engine matches the literal rule interpreter") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 20000; ++trial) {
    const auto stages = testing::random_oracle_rubric(rng);
    const auto events = testing::random_grade_events(rng, static_cast<int>(stages.size()));
    const auto expected = testing::oracle_grade(stages, events);

    RolloutGrade g(testing::to_rubric(stages));
    std::optional<RolloutResult> result;
    for (std::size_t i = 0; i < events.size(); ++i) {
      bool ok = true;
      try {
        if (events[i].type == GradeEventType::kFinalize) {
          result = g.finalize(*events[i].reason, 0);
        } else {
          g.apply(events[i]);
        }
      } catch (const Error&) {
        ok = false;
      }
      REQUIRE(ok == expected.accepted[i]);
    }
    REQUIRE(result.has_value());
    CHECK(result->success == expected.success);
    CHECK(result->progress_score == expected.score);
    CHECK(result->terminated_reason == expected.reason);
  }
}

TEST_CASE("score bounds, monotone success, and replay") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5000; ++trial) {
    const auto stages = testing::random_oracle_rubric(rng);
    const auto events = testing::random_grade_events(rng, static_cast<int>(stages.size()));
    RolloutGrade g(testing::to_rubric(stages));
    for (const auto& e : events) {
      try {
        g.apply(e);
      } catch (const Error&) {
      }
      CHECK(g.progress_half_points() >= 0);
      CHECK(g.progress_half_points() <= kRolloutHalfPoints);
    }
    const auto& r = *g.result();
    // Zero-point stages cannot move the score, so they are exempt.
    bool all_clean = true;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& st = g.stages()[i];
      if (stages[i].points > 0) all_clean = all_clean && st.completed && st.retries == 0;
    }
    CHECK((r.progress_score == 10.0) == all_clean);

    const auto replayed = RolloutGrade::replay(g.rubric(), g.events());
    CHECK(*replayed.result() == r);
    CHECK(replayed.stages() == g.stages());
  }
}

TEST_CASE("adding a completed non-critical stage never breaks success") {
  TaskRubric r("t", {TaskRubric::stage("a", 6, true), TaskRubric::stage("opt", 4, false)});
  auto without = start_rollout(r);
  without.mark_stage_complete(0);
  auto with = start_rollout(r);
  with.mark_stage_complete(0);
  with.mark_stage_complete(1);
  CHECK(without.success());
  CHECK(with.success());
}
