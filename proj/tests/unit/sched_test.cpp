#include <doctest.h>

#include <deque>
#include <set>
#include <thread>
#include <unordered_set>

#include "tablebench/protocol/error.hpp"
#include "tablebench/sched/scheduler.hpp"

using namespace tb;
using namespace tb::sched;

namespace {

constexpr Nanos kSec = 1'000'000'000;

std::vector<TaskEntry> catalog() {
  std::vector<TaskEntry> tasks;
  for (const char* id : {"stack_color_blocks", "open_the_drawer", "put_cup_on_coaster", "fold_towel", "sort_fruit"}) {
    tasks.push_back({id, std::string("do ") + id, {Archetype::kUr5, Archetype::kArx5}});
  }
  tasks.push_back({"bimanual_only", "hand over", {Archetype::kAloha}});
  return tasks;
}

struct Fixture {
  Nanos now = 0;
  std::unique_ptr<Scheduler> s;

  explicit Fixture(int rollouts = 10, bool comparative = false) {
    SchedulerConfig cfg;
    cfg.per_rollout_ns = 60 * kSec;
    cfg.notify_lead_ns = 300 * kSec;
    cfg.rollouts_per_task = rollouts;
    cfg.enable_comparative = comparative;
    cfg.clock = [this] { return now; };
    s = std::make_unique<Scheduler>(catalog(), cfg);
    s->register_robot("ur5-1", Archetype::kUr5);
    s->register_robot("aloha-1", Archetype::kAloha);
  }

  std::string submit(const std::string& owner, std::vector<std::string> tasks, std::string name = "model") {
    return s->submit_job(owner, {std::move(tasks), std::move(name)}).job_id;
  }

  void run_rollouts(const std::string& job, int n, double score = 10.0) {
    for (int i = 0; i < n; ++i) {
      const auto t = s->start_rollout(job);
      now += 60 * kSec;
      s->end_rollout(t.rollout_id, {score >= 5.0, score, TerminationReason::kCompleted, 60000});
    }
  }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInternal;
}

}  // namespace

TEST_CASE("submit_job") {
  Fixture f;
  SUBCASE("single task is task-specific") {
    const auto st = f.s->submit_job("alice", {{"stack_color_blocks"}, "pi0"});
    CHECK(st.setting == EvalSetting::kTaskSpecific);
    CHECK(st.status == JobState::kQueued);
    CHECK_FALSE(st.approved);
    REQUIRE(st.progress.size() == 1);
    CHECK(st.progress[0].total == 10);
  }
  SUBCASE("five tasks make a generalist") {
    const auto st = f.s->submit_job(
        "alice", {{"stack_color_blocks", "open_the_drawer", "put_cup_on_coaster", "fold_towel", "sort_fruit"}, "pi0"});
    CHECK(st.setting == EvalSetting::kGeneralist);
  }
  SUBCASE("unknown task queues nothing") {
    const auto before = f.s->events().size();
    CHECK(code_of([&] { f.submit("alice", {"stack_color_blocks", "juggle"}); }) == ErrorCode::kNotFound);
    CHECK(f.s->events().size() == before);
    CHECK(f.s->list_jobs(Viewer::tester_role()).empty());
  }
  SUBCASE("empty task set and missing key") {
    CHECK(code_of([&] { f.submit("alice", {}); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { f.submit("", {"fold_towel"}); }) == ErrorCode::kUnauthorized);
    CHECK(code_of([&] { f.submit("alice", {"fold_towel", "fold_towel"}); }) == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("poll_job") {
  Fixture f;
  const auto j = f.submit("alice", {"fold_towel"});
  SUBCASE("owner and tester may read, others may not") {
    CHECK(f.s->poll_job(j, Viewer::owner("alice")).status == JobState::kQueued);
    CHECK(f.s->poll_job(j, Viewer::tester_role()).job_id == j);
    CHECK(code_of([&] { f.s->poll_job(j, Viewer::owner("bob")); }) == ErrorCode::kForbidden);
    CHECK(code_of([&] { f.s->poll_job("job-99", Viewer::owner("alice")); }) == ErrorCode::kNotFound);
  }
  SUBCASE("owners only list their own jobs") {
    f.submit("bob", {"fold_towel"});
    CHECK(f.s->list_jobs(Viewer::owner("alice")).size() == 1);
    CHECK(f.s->list_jobs(Viewer::tester_role()).size() == 2);
  }
  SUBCASE("expected start sums the remaining work ahead") {
    const auto j2 = f.submit("bob", {"fold_towel", "sort_fruit"});
    const auto j3 = f.submit("carol", {"fold_towel"});
    for (const auto& id : {j, j2, j3}) f.s->approve_job(id, "ur5-1");
    f.now = 5 * kSec;
    // 10 rollouts of j and 20 of j2 ahead of j3.
    CHECK(f.s->poll_job(j3, Viewer::owner("carol")).expected_start_ns == 5 * kSec + 30 * 60 * kSec);
    CHECK(f.s->poll_job(j, Viewer::owner("alice")).expected_start_ns == 5 * kSec);

    f.s->start_job(j);
    Nanos last = f.s->poll_job(j3, Viewer::owner("carol")).expected_start_ns;
    for (int k = 0; k < 10; ++k) {
      const auto t = f.s->start_rollout(j);
      for (int step = 0; step < 6; ++step) {
        f.now += 10 * kSec;
        const auto e = f.s->poll_job(j3, Viewer::owner("carol")).expected_start_ns;
        CHECK(e <= last);
        last = e;
      }
      f.s->end_rollout(t.rollout_id, {true, 10.0, TerminationReason::kCompleted, 60000});
      const auto e = f.s->poll_job(j3, Viewer::owner("carol")).expected_start_ns;
      CHECK(e <= last);
      last = e;
    }
    CHECK(last == f.now + 20 * 60 * kSec);
  }
  SUBCASE("unapproved jobs estimate against the least loaded compatible robot") {
    const auto j2 = f.submit("bob", {"fold_towel"});
    f.s->approve_job(j2, "ur5-1");
    CHECK(f.s->poll_job(j, Viewer::owner("alice")).expected_start_ns == 10 * 60 * kSec);
    const auto bi = f.submit("dan", {"bimanual_only"});
    CHECK(f.s->poll_job(bi, Viewer::owner("dan")).expected_start_ns == 0);
  }
}

TEST_CASE("approval and notification") {
  Fixture f;
  const auto a = f.submit("alice", {"fold_towel"});
  const auto b = f.submit("bob", {"fold_towel"});
  SUBCASE("approval places jobs on a compatible robot") {
    CHECK(code_of([&] { f.s->approve_job(a, "aloha-1"); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { f.s->approve_job(a, "ghost"); }) == ErrorCode::kNotFound);
    const auto st = f.s->approve_job(a, "ur5-1");
    CHECK(st.approved);
    CHECK(st.robot_id == "ur5-1");
    const auto n = f.s->events().size();
    CHECK(f.s->approve_job(a, "ur5-1") == st);
    CHECK(f.s->events().size() == n);
  }
  SUBCASE("only the head of the queue is notified") {
    f.s->approve_job(a, "ur5-1");
    f.s->approve_job(b, "ur5-1");
    CHECK(f.s->next_job("ur5-1") == a);
    CHECK(code_of([&] { f.s->notify_upcoming(b); }) == ErrorCode::kConflict);
    f.now = 42 * kSec;
    const auto st = f.s->notify_upcoming(a);
    CHECK(st.status == JobState::kNotified);
    CHECK(f.s->poll_job(a, Viewer::owner("alice")).expected_start_ns <= f.now + 300 * kSec);
  }
  SUBCASE("unapproved jobs cannot be notified or started") {
    CHECK(code_of([&] { f.s->notify_upcoming(a); }) == ErrorCode::kConflict);
    CHECK(code_of([&] { f.s->start_job(a); }) == ErrorCode::kConflict);
  }
  SUBCASE("one running job per robot") {
    f.s->approve_job(a, "ur5-1");
    f.s->approve_job(b, "ur5-1");
    f.s->start_job(a);
    CHECK(code_of([&] { f.s->start_job(b); }) == ErrorCode::kConflict);
    f.run_rollouts(a, 10);
    CHECK(f.s->poll_job(a, Viewer::owner("alice")).status == JobState::kCompleted);
    CHECK_NOTHROW(f.s->start_job(b));
  }
}

TEST_CASE("job progress") {
  Fixture f;
  const auto j = f.submit("alice", {"fold_towel", "sort_fruit"});
  f.s->approve_job(j, "ur5-1");
  f.s->start_job(j);
  SUBCASE("multi-task job names the task underway") {
    f.run_rollouts(j, 10);
    f.run_rollouts(j, 3);
    const auto t = f.s->start_rollout(j);
    CHECK(t.task_id == "sort_fruit");
    CHECK(t.index == 4);
    const auto st = f.s->poll_job(j, Viewer::owner("alice"));
    CHECK(st.current_task == "sort_fruit");
    CHECK(st.prompt == "do sort_fruit");
    CHECK(st.rollout.phase == RolloutPhase::kActive);
    CHECK(st.rollout.rollout_id == t.rollout_id);
    CHECK(st.rollout.index == 4);
    CHECK(code_of([&] { f.s->start_rollout(j); }) == ErrorCode::kConflict);
  }
  SUBCASE("completion shows ten of ten everywhere") {
    f.run_rollouts(j, 20, 9.5);
    const auto st = f.s->poll_job(j, Viewer::owner("alice"));
    CHECK(st.status == JobState::kCompleted);
    for (const auto& p : st.progress) CHECK(p.completed == 10);
    CHECK_FALSE(st.current_task.has_value());
    CHECK(st.rollout.phase == RolloutPhase::kEnded);
    const auto results = f.s->job_results(j);
    CHECK(results.at("fold_towel").size() == 10);
    CHECK(results.at("sort_fruit")[0].progress_score == 9.5);
    CHECK(code_of([&] { f.s->start_rollout(j); }) == ErrorCode::kConflict);
  }
  SUBCASE("ending an unknown rollout fails") {
    CHECK(code_of([&] { f.s->end_rollout("rollout-77", {}); }) == ErrorCode::kConflict);
  }
  SUBCASE("revocation ends the job") {
    f.s->start_rollout(j);
    CHECK(f.s->revoke_job(j).status == JobState::kRevoked);
    CHECK(code_of([&] { f.s->start_rollout(j); }) == ErrorCode::kConflict);
    CHECK(f.s->revoke_job(j).status == JobState::kRevoked);
  }
}

TEST_CASE("handle_maintenance") {
  Fixture f;
  const auto j = f.submit("alice", {"fold_towel"});
  f.s->approve_job(j, "ur5-1");
  SUBCASE("no running job is a no-op") {
    CHECK(f.s->handle_maintenance("ur5-1", "e-stop").empty());
    CHECK(f.s->poll_job(j, Viewer::owner("alice")).status == JobState::kQueued);
  }
  SUBCASE("fault in rollout 4 discards it and the resume re-runs rollout 4") {
    f.s->start_job(j);
    f.run_rollouts(j, 3);
    const auto t4 = f.s->start_rollout(j);
    REQUIRE(t4.index == 4);
    CHECK(f.s->handle_maintenance("ur5-1", "gripper jammed") == std::vector<std::string>{j});
    auto st = f.s->poll_job(j, Viewer::owner("alice"));
    CHECK(st.status == JobState::kPausedMaintenance);
    CHECK(st.progress[0].completed == 3);
    CHECK(code_of([&] { f.s->end_rollout(t4.rollout_id, {true, 10.0, TerminationReason::kCompleted, 1}); }) ==
          ErrorCode::kConflict);
    CHECK(code_of([&] { f.s->start_rollout(j); }) == ErrorCode::kConflict);
    CHECK(f.s->resume_robot("ur5-1") == std::vector<std::string>{j});
    const auto again = f.s->start_rollout(j);
    CHECK(again.index == 4);
    CHECK(again.rollout_id != t4.rollout_id);
    CHECK(f.s->job_results(j).at("fold_towel").size() == 3);
  }
  SUBCASE("two faults in one rollout leave one re-run") {
    f.s->start_job(j);
    f.s->start_rollout(j);
    f.s->handle_maintenance("ur5-1", "a");
    f.s->handle_maintenance("ur5-1", "b");
    CHECK(f.s->job_record(j).discarded == 1);
    f.s->resume_robot("ur5-1");
    CHECK(f.s->start_rollout(j).index == 1);
    f.now += kSec;
    CHECK(f.s->poll_job(j, Viewer::owner("alice")).progress[0].completed == 0);
  }
}

namespace {

// State key for the model check: the dump minus counters that grow without
// changing behaviour.
std::string model_key(const Scheduler& s) {
  Json d = s.state_dump();
  for (auto& j : d["jobs"]) {
    j.erase("discarded");
    j["active_rollout"] = !j["active_rollout"].is_null();
    j.erase("queue_pos");
  }
  return d.dump();
}

}  // namespace

TEST_CASE("no event sequence reaches an undefined transition") {
  SchedulerConfig cfg;
  cfg.rollouts_per_task = 2;
  Nanos now = 0;
  cfg.clock = [&now] { return now; };
  Scheduler root(catalog(), cfg);
  root.register_robot("ur5-1", Archetype::kUr5);
  root.submit_job("a", {{"fold_towel"}, "m1"});
  root.submit_job("b", {{"fold_towel", "sort_fruit"}, "m2"});
  const std::vector<std::string> jobs = {"job-1", "job-2"};

  using Op = std::function<void(Scheduler&)>;
  std::vector<std::pair<std::string, Op>> ops;
  for (const auto& j : jobs) {
    ops.push_back({"approve " + j, [j](Scheduler& s) { s.approve_job(j, "ur5-1"); }});
    ops.push_back({"notify " + j, [j](Scheduler& s) { s.notify_upcoming(j); }});
    ops.push_back({"start " + j, [j](Scheduler& s) { s.start_job(j); }});
    ops.push_back({"rollout " + j, [j](Scheduler& s) { s.start_rollout(j); }});
    ops.push_back({"end " + j, [j](Scheduler& s) {
                     const auto r = s.job_record(j).active_rollout;
                     s.end_rollout(r.value_or("rollout-none"), {true, 10.0, TerminationReason::kCompleted, 1});
                   }});
    ops.push_back({"revoke " + j, [j](Scheduler& s) { s.revoke_job(j); }});
  }
  ops.push_back({"fault", [](Scheduler& s) { s.handle_maintenance("ur5-1", "x"); }});
  ops.push_back({"resume", [](Scheduler& s) { s.resume_robot("ur5-1"); }});

  std::unordered_set<std::string> seen{model_key(root)};
  std::deque<std::vector<SchedEvent>> frontier{root.events()};
  std::size_t transitions = 0;
  std::size_t internal_errors = 0;
  std::size_t bad_invariants = 0;
  while (!frontier.empty()) {
    const auto log = std::move(frontier.front());
    frontier.pop_front();
    for (const auto& [name, op] : ops) {
      auto s = Scheduler::replay(catalog(), cfg, log);
      try {
        op(*s);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kInternal) ++internal_errors;
        continue;
      }
      ++transitions;
      int running = 0;
      for (const auto& st : s->list_jobs(Viewer::tester_role())) {
        running += st.status == JobState::kRunning;
        for (const auto& p : st.progress) bad_invariants += p.completed > p.total;
        bad_invariants += st.setting != (st.task_set.size() > 1 ? EvalSetting::kGeneralist : EvalSetting::kTaskSpecific);
      }
      bad_invariants += running > 1;
      const auto replayed = Scheduler::replay(catalog(), cfg, s->events());
      bad_invariants += !(replayed->state_dump() == s->state_dump());
      if (seen.insert(model_key(*s)).second) frontier.push_back(s->events());
    }
  }
  CHECK(internal_errors == 0);
  CHECK(bad_invariants == 0);
  CHECK(seen.size() > 100);
  MESSAGE("explored " << seen.size() << " states, " << transitions << " transitions");
}

TEST_CASE("allowed_transition table") {
  using S = JobState;
  const S all[] = {S::kQueued, S::kNotified, S::kRunning, S::kPausedMaintenance, S::kCompleted, S::kRevoked};
  for (S from : all) {
    for (S to : all) {
      const bool forward = static_cast<int>(to) > static_cast<int>(from);
      const bool expected = from != S::kCompleted && from != S::kRevoked &&
                            (to == S::kRevoked || (from == S::kPausedMaintenance && to == S::kRunning) ||
                             (forward && to != S::kPausedMaintenance && to != S::kCompleted) ||
                             (from == S::kRunning && (to == S::kPausedMaintenance || to == S::kCompleted)));
      CHECK_MESSAGE(allowed_transition(from, to) == expected, to_string(from) << " -> " << to_string(to));
    }
  }
}

TEST_CASE("scheduler log") {
  Fixture f(3);
  const auto j = f.submit("alice", {"fold_towel"});
  f.s->approve_job(j, "ur5-1");
  f.s->start_job(j);
  f.run_rollouts(j, 2);
  f.s->start_rollout(j);
  f.s->handle_maintenance("ur5-1", "cable");
  f.s->resume_robot("ur5-1");

  SUBCASE("replay through JSON rebuilds the state") {
    std::vector<SchedEvent> log;
    for (const auto& e : f.s->events()) log.push_back(Json::parse(Json(e).dump()).get<SchedEvent>());
    auto again = Scheduler::replay(catalog(), f.s->config(), log);
    CHECK(again->state_dump() == f.s->state_dump());
    CHECK(again->poll_job(j, Viewer::owner("alice")).progress == f.s->poll_job(j, Viewer::owner("alice")).progress);
    // Continues exactly where the original stopped.
    CHECK(again->start_rollout(j).rollout_id == f.s->start_rollout(j).rollout_id);
  }
  SUBCASE("sequence numbers and times are ordered") {
    const auto log = f.s->events();
    for (std::size_t i = 0; i < log.size(); ++i) {
      CHECK(log[i].seq == static_cast<std::int64_t>(i) + 1);
      if (i > 0) CHECK(log[i].at >= log[i - 1].at);
    }
  }
  SUBCASE("a log with a gap is rejected") {
    auto log = f.s->events();
    log.erase(log.begin() + 2);
    CHECK(code_of([&] { Scheduler::replay(catalog(), f.s->config(), log); }) == ErrorCode::kInvalidArgument);
  }
  SUBCASE("sinks see every event in order") {
    std::vector<std::int64_t> seqs;
    f.s->on_event([&](const SchedEvent& e) { seqs.push_back(e.seq); });
    const auto base = static_cast<std::int64_t>(f.s->events().size());
    f.submit("bob", {"sort_fruit"});
    f.s->handle_maintenance("aloha-1", "noop");
    CHECK(seqs == std::vector<std::int64_t>{base + 1, base + 2});
  }
}

TEST_CASE("concurrent submissions and faults serialize into one log") {
  SchedulerConfig cfg;
  Scheduler s(catalog(), cfg);
  s.register_robot("ur5-1", Archetype::kUr5);
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&, t] {
      for (int k = 0; k < 50; ++k) {
        if (t == 0) {
          s.handle_maintenance("ur5-1", "flaky");
        } else {
          const auto id = s.submit_job("user" + std::to_string(t), {{"fold_towel"}, "m"}).job_id;
          s.poll_job(id, Viewer::owner("user" + std::to_string(t)));
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  const auto log = s.events();
  CHECK(log.size() == 1 + 300);
  auto again = Scheduler::replay(catalog(), cfg, log);
  CHECK(again->state_dump() == s.state_dump());
  std::set<std::string> ids;
  for (const auto& st : s.list_jobs(Viewer::tester_role())) ids.insert(st.job_id);
  CHECK(ids.size() == 250);
}

TEST_CASE("comparative protocol") {
  Fixture f(10, true);
  const auto a = f.submit("alice", {"fold_towel"}, "secret-model-alpha");
  const auto b = f.submit("bob", {"fold_towel"}, "secret-model-bravo");
  const auto sid = f.s->create_session("fold_towel", "ur5-1", {a, b}, 7);

  auto tester_payloads = [&] {
    std::string all = f.s->session_view(sid).dump();
    for (const auto& st : f.s->list_jobs(Viewer::tester_role())) all += Json(st).dump();
    all += Json(f.s->poll_job(a, Viewer::tester_role())).dump();
    all += Json(f.s->poll_job(b, Viewer::tester_role())).dump();
    return all;
  };

  SUBCASE("disabled by default") {
    Fixture plain;
    const auto x = plain.submit("alice", {"fold_towel"});
    const auto y = plain.submit("bob", {"fold_towel"});
    CHECK(code_of([&] { plain.s->create_session("fold_towel", "ur5-1", {x, y}, 1); }) == ErrorCode::kForbidden);
  }
  SUBCASE("session validation") {
    const auto c = f.submit("carol", {"sort_fruit"}, "c");
    const auto d = f.submit("dan", {"fold_towel"}, "d");
    CHECK(code_of([&] { f.s->create_session("fold_towel", "ur5-1", {d}, 1); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { f.s->create_session("fold_towel", "ur5-1", {c, d}, 1); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { f.s->create_session("fold_towel", "ur5-1", {a, d}, 1); }) == ErrorCode::kConflict);
  }
  SUBCASE("draws are balanced and blinded") {
    std::map<std::string, int> counts;
    for (int i = 0; i < 1000; ++i) {
      const auto as = f.s->comparative_assign(sid, "state-" + std::to_string(i % 10));
      ++counts[as.blinded_id];
      f.s->record_session_result(as.rollout_id, {i % 3 == 0, 5.0, TerminationReason::kManual, 1000});
    }
    REQUIRE(counts.size() == 2);
    for (const auto& [id, n] : counts) {
      CHECK(n >= 450);
      CHECK(n <= 550);
    }
    const auto payload = tester_payloads();
    CHECK(payload.find("secret-model-alpha") == std::string::npos);
    CHECK(payload.find("secret-model-bravo") == std::string::npos);
    for (const auto& st : f.s->list_jobs(Viewer::tester_role())) CHECK_FALSE(st.display_name.has_value());
    // The owner still sees their own name.
    CHECK(f.s->poll_job(a, Viewer::owner("alice")).display_name == "secret-model-alpha");

    f.s->comparative_finalize(sid);
    const auto after = f.s->session_view(sid).dump();
    CHECK(after.find("secret-model-alpha") != std::string::npos);
    CHECK(f.s->poll_job(a, Viewer::tester_role()).display_name == "secret-model-alpha");
  }
  SUBCASE("initial states are fixed before each draw") {
    for (int i = 0; i < 20; ++i) f.s->comparative_assign(sid, "s" + std::to_string(i));
    const auto log = f.s->events();
    int selections = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (log[i].type != "model_selected") continue;
      ++selections;
      REQUIRE(i > 0);
      CHECK(log[i - 1].type == "initial_state_fixed");
      CHECK(log[i - 1].data.at("session_id") == log[i].data.at("session_id"));
    }
    CHECK(selections == 20);
  }
  SUBCASE("selection ignores the tester's initial-state input") {
    Fixture g(10, true);
    const auto x = g.submit("alice", {"fold_towel"}, "x");
    const auto y = g.submit("bob", {"fold_towel"}, "y");
    const auto sid2 = g.s->create_session("fold_towel", "ur5-1", {x, y}, 7);
    const auto view1 = f.s->session_view(sid);
    const auto view2 = g.s->session_view(sid2);
    for (int i = 0; i < 50; ++i) {
      const auto p = f.s->comparative_assign(sid, "alpha-" + std::to_string(i));
      const auto q = g.s->comparative_assign(sid2, "other-" + std::to_string(i * 7));
      const bool p_first = p.blinded_id == view1["models"][0]["blinded_id"];
      const bool q_first = q.blinded_id == view2["models"][0]["blinded_id"];
      CHECK(p_first == q_first);
    }
  }
  SUBCASE("A wins six of ten and ranks first") {
    const auto view = f.s->session_view(sid);
    for (int i = 0; i < 40; ++i) {
      const auto as = f.s->comparative_assign(sid, "state-" + std::to_string(i % 10));
      const bool is_a = as.blinded_id == view["models"][0]["blinded_id"];
      const bool win = is_a ? (i % 10) < 6 : (i % 10) >= 6;
      f.s->record_session_result(as.rollout_id, {win, win ? 10.0 : 2.0, TerminationReason::kCompleted, 1});
    }
    const auto out = f.s->comparative_finalize(sid);
    REQUIRE(out.ranking.size() == 2);
    REQUIRE(out.revealed.size() == 2);
    CHECK(out.ranking[0].display_name == "secret-model-alpha");
    CHECK(out.ranking[0].rank == 1);
    CHECK(out.ranking[1].rank == 2);
    CHECK_FALSE(out.ranking[0].tied);
  }
  SUBCASE("identical grades tie explicitly") {
    for (int i = 0; i < 30; ++i) {
      const auto as = f.s->comparative_assign(sid, "s");
      f.s->record_session_result(as.rollout_id, {true, 8.0, TerminationReason::kCompleted, 1});
    }
    const auto out = f.s->comparative_finalize(sid);
    REQUIRE(out.ranking.size() == 2);
    CHECK(out.ranking[0].tied);
    CHECK(out.ranking[1].tied);
    CHECK(out.ranking[0].rank == out.ranking[1].rank);
  }
  SUBCASE("lifecycle") {
    const auto as = f.s->comparative_assign(sid, "s");
    CHECK(code_of([&] { f.s->comparative_finalize(sid); }) == ErrorCode::kConflict);
    f.s->record_session_result(as.rollout_id, {true, 10.0, TerminationReason::kCompleted, 1});
    CHECK(code_of([&] { f.s->record_session_result(as.rollout_id, {}); }) == ErrorCode::kConflict);
    const auto first = f.s->comparative_finalize(sid);
    const auto second = f.s->comparative_finalize(sid);
    CHECK(Json(f.s->session_view(sid)).dump() == Json(f.s->session_view(sid)).dump());
    CHECK(first.ranking.size() == second.ranking.size());
    CHECK(first.ranking[0].display_name == second.ranking[0].display_name);
    CHECK(first.ranking[0].sr == second.ranking[0].sr);
    CHECK(code_of([&] { f.s->comparative_assign(sid, "t"); }) == ErrorCode::kConflict);
  }
  SUBCASE("replay re-checks every logged draw") {
    for (int i = 0; i < 10; ++i) f.s->comparative_assign(sid, "s");
    auto log = f.s->events();
    CHECK(Scheduler::replay(catalog(), f.s->config(), log)->session_view(sid) == f.s->session_view(sid));
    const auto view = f.s->session_view(sid);
    for (auto& e : log) {
      if (e.type != "model_selected") continue;
      const bool first = e.data["blinded_id"] == view["models"][0]["blinded_id"];
      e.data["blinded_id"] = view["models"][first ? 1 : 0]["blinded_id"];
      break;
    }
    CHECK(code_of([&] { Scheduler::replay(catalog(), f.s->config(), log); }) == ErrorCode::kInternal);
  }
}
