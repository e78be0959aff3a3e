#include <doctest.h>

#include <atomic>
#include <set>

#include "support/platform_stack.hpp"
#include "tablebench/client/loop.hpp"
#include "tablebench/protocol/routes.hpp"

using namespace tb;
using namespace tb::testing;
using namespace tb::client;

namespace {

Client client_for(const Stack& stack, const std::string& key) { return Client::connect(stack.endpoint(), key); }

class CountingAdapter : public PolicyAdapter {
 public:
  std::string display_name() const override { return "counting"; }
  void warm_up(const JobContext& ctx) override {
    ++warm_ups;
    warmed_context = ctx;
  }
  ActionChunk infer(const ObservationBundle&, const std::string&) override { return {}; }

  std::atomic<int> warm_ups{0};
  JobContext warmed_context;
};

// Every action the robot started during each rollout, read from its episode.
std::map<std::string, std::vector<std::int64_t>> started_actions(server::Platform& p,
                                                                 const std::vector<Transcript>& transcripts) {
  std::map<std::string, std::vector<std::int64_t>> out;
  for (const auto& t : transcripts) {
    const auto episode = p.rollout(t.rollout_id)->recorder->episode_id();
    for (const auto& ev : p.store().read_events(episode)) {
      if (ev.type != "tick") continue;
      for (const auto& id : ev.data.at("started")) out[t.rollout_id].push_back(id.get<std::int64_t>());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("SDK traffic stays on the listed routes and covers them") {
  Stack stack([](auto& cfg) {
    cfg.sandbox = true;
    cfg.enable_comparative = true;
  });
  auto recorder = std::make_shared<RecordingTransport>(std::make_shared<HttpTransport>(stack.endpoint()));
  Client tester(recorder, kTesterKey);
  Client user(recorder, kUserKey);
  const auto attempt = [](auto&& fn) {
    try {
      fn();
    } catch (const Error&) {
    }
  };

  tester.health();
  tester.whoami();
  tester.robots();
  tester.robot("ur5-1");
  const auto obs = tester.capture("ur5-1");
  ActionChunk hold;
  hold.actions.push_back({obs.proprio.joint_positions, obs.proprio.gripper_openness, 20});
  tester.enqueue("ur5-1", hold);
  tester.queue("ur5-1");
  tester.sim_state("ur5-1");
  attempt([&] { tester.reset_robot("ur5-1", {{"task_id", "stack_color_blocks"}, {"seed", 3}}); });
  attempt([&] { tester.overlay("ur5-1", "no-such-episode", 0.5); });
  tester.fault("ur5-1", "test");
  tester.resume("ur5-1");
  tester.tasks();
  tester.task("stack_color_blocks");
  tester.references("stack_color_blocks");
  const auto a = user.submit_job({{"stack_color_blocks"}, "a"}).job_id;
  const auto b = user.submit_job({{"stack_color_blocks"}, "b"}).job_id;
  user.job(a);
  user.jobs();
  user.job_results(a);
  const auto session = tester.create_session({{"task_id", "stack_color_blocks"},
                                              {"robot_id", "ur5-1"},
                                              {"job_ids", {a, b}},
                                              {"seed", 1}})
                           .at("session_id")
                           .get<std::string>();
  tester.session(session);
  const auto rid = tester.assign(session, "pose-1").at("rollout_id").get<std::string>();
  tester.grade(rid, {GradeEventType::kFinalize, std::nullopt, TerminationReason::kManual}, 100);
  tester.rollout(rid);
  attempt([&] { tester.finalize_session(session); });
  tester.approve_job(a, "ur5-1");
  user.revoke_job(a);
  user.open_sandbox_rollout("ur5-1", "stack_color_blocks");
  for (const auto* name : {"averages", "tags", "ranklist"}) user.analytics(name);
  user.analytics("cdf", {{"model", "Pi05"}});
  user.analytics("dominance", {{"a", "Pi05"}, {"b", "CogACT"}});

  std::set<std::size_t> covered;
  for (const auto& call : recorder->calls()) {
    INFO(call.method << " " << call.path);
    CHECK(call.status != 0);
    CHECK(call.latency_ms >= 0.0);
    bool listed = false;
    for (std::size_t i = 0; i < kRoutes.size(); ++i) {
      if (kRoutes[i].method == call.method && route_matches(kRoutes[i].pattern, call.path)) {
        listed = true;
        covered.insert(i);
      }
    }
    CHECK(listed);
  }
  for (std::size_t i = 0; i < kRoutes.size(); ++i) {
    INFO(kRoutes[i].method << " " << kRoutes[i].pattern);
    CHECK(covered.count(i) == 1);
  }
}

TEST_CASE("errors come back typed") {
  Stack stack;
  auto user = client_for(stack, kUserKey);
  try {
    user.robot("nope");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotFound);
  }
  auto anon = client_for(stack, "bad-key");
  try {
    anon.robots();
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnauthorized);
  }
  auto dead = Client::connect("http://127.0.0.1:1", kUserKey, {2, std::chrono::milliseconds(5), std::chrono::milliseconds(200)});
  try {
    dead.health();
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnavailable);
  }
  CHECK(url_encode("a b/c&d") == "a%20b%2Fc%26d");
}

TEST_CASE("await_job") {
  SUBCASE("warm-up fires once while the job is notified") {
    Stack stack([](auto& cfg) { cfg.warm_up = std::chrono::milliseconds(300); });
    auto recorder = std::make_shared<RecordingTransport>(std::make_shared<HttpTransport>(stack.endpoint()));
    Client user(recorder, kUserKey);
    const auto job = user.submit_job({{"stack_color_blocks"}, "m"}).job_id;
    std::thread approver([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      stack.platform().approve_job(stack.tester(), job, "ur5-1");
    });
    CountingAdapter adapter;
    LoopConfig cfg;
    cfg.poll_interval = std::chrono::milliseconds(10);
    const auto ctx = await_job(user, job, adapter, cfg);
    approver.join();
    CHECK(adapter.warm_ups == 1);
    CHECK(adapter.warmed_context.task_id == "stack_color_blocks");
    CHECK(ctx.robot_id == "ur5-1");
    CHECK(ctx.prompt == stack.platform().catalog().get("stack_color_blocks").prompt);
    std::size_t polls = 0;
    for (const auto& c : recorder->calls()) polls += c.method == "GET" && c.path == "/api/v1/jobs/" + job;
    CHECK(polls >= 3);
  }
  SUBCASE("a revoked job stops the wait") {
    Stack stack;
    auto user = client_for(stack, kUserKey);
    const auto job = user.submit_job({{"stack_color_blocks"}, "m"}).job_id;
    std::thread revoker([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      stack.platform().revoke_job(stack.user(), job);
    });
    CountingAdapter adapter;
    CHECK_THROWS_AS(await_job(user, job, adapter, {}), JobRevoked);
    revoker.join();
    CHECK(adapter.warm_ups == 0);
  }
  SUBCASE("a multi-task job names the task underway") {
    Stack stack([](auto& cfg) { cfg.auto_approve = true; });
    auto user = client_for(stack, kUserKey);
    const auto job = user.submit_job({{"put_cup_on_coaster", "stack_color_blocks"}, "m"}).job_id;
    CountingAdapter adapter;
    const auto ctx = await_job(user, job, adapter, {});
    CHECK(ctx.task_id == "put_cup_on_coaster");
    CHECK(ctx.prompt == stack.platform().catalog().get("put_cup_on_coaster").prompt);
  }
}

TEST_CASE("run_job drives the oracle through every rollout") {
  Stack stack([](auto& cfg) {
    cfg.acceleration = 20.0;
    cfg.auto_approve = true;
  });
  auto user = client_for(stack, kUserKey);
  const auto catalog = sim::TaskCatalog::load_dir(std::string(TB_SOURCE_DIR) + "/tasks");

  SUBCASE("draining before capture") {
    OracleAdapter adapter(catalog, "oracle", 24);
    const auto job = user.submit_job({{"stack_color_blocks"}, adapter.display_name()}).job_id;
    const auto report = run_job(user, job, adapter, {});
    CHECK(report.final_status.status == JobState::kCompleted);
    CHECK(report.transcripts.size() == 10);
    CHECK(adapter.warm_ups() == 1);
    const auto& task = report.results.at("tasks").at(0);
    CHECK(task.at("success_rate").get<int>() >= 90);
    CHECK(task.at("task_score").get<double>() >= 90.0);

    const auto started = started_actions(stack.platform(), report.transcripts);
    for (const auto& t : report.transcripts) {
      CHECK(t.end_reason == "rollout_ended");
      for (const auto& c : t.captures) {
        CHECK(c.queue_length == 0);
        CHECK_FALSE(c.executing.has_value());
      }
      std::set<std::int64_t> enqueued;
      for (const auto& e : t.enqueues) enqueued.insert(e.action_ids.begin(), e.action_ids.end());
      REQUIRE(started.count(t.rollout_id) == 1);
      for (const auto id : started.at(t.rollout_id)) CHECK(enqueued.count(id) == 1);
    }
  }
  SUBCASE("capturing without draining") {
    OracleAdapter adapter(catalog, "oracle-nodrain", 24);
    const auto job = user.submit_job({{"stack_color_blocks"}, adapter.display_name()}).job_id;
    LoopConfig cfg;
    cfg.drain_before_capture = false;
    const auto report = run_job(user, job, adapter, cfg);
    CHECK(report.final_status.status == JobState::kCompleted);
    std::size_t busy = 0;
    for (const auto& t : report.transcripts) {
      for (const auto& c : t.captures) busy += c.queue_length > 0 || c.executing.has_value();
    }
    CHECK(busy > 0);
  }
}

TEST_CASE("mock_test") {
  SUBCASE("a healthy sandbox passes every check") {
    Stack stack([](auto& cfg) { cfg.sandbox = true; });
    auto user = client_for(stack, kUserKey);
    const auto report = mock_test(user, "ur5-1", "stack_color_blocks");
    for (const auto& c : report.checks) {
      INFO(c.name << ": " << c.detail);
      CHECK(c.ok);
      CHECK(c.status == 200);
    }
    CHECK(report.ok());
    CHECK(report.checks.size() == 10);
  }
  SUBCASE("a wrong key fails every authenticated endpoint with 401") {
    Stack stack([](auto& cfg) { cfg.sandbox = true; });
    auto anon = client_for(stack, "not-a-key");
    const auto report = mock_test(anon, "ur5-1", "stack_color_blocks");
    CHECK_FALSE(report.ok());
    for (const auto& c : report.checks) {
      INFO(c.name);
      if (c.name == "health") {
        CHECK(c.ok);
      } else if (c.name == "auth" || c.name == "robots" || c.name == "capture" || c.name == "queue_status" ||
                 c.name == "grading_open" || c.name == "jobs") {
        CHECK(c.status == 401);
      } else {
        CHECK_FALSE(c.ok);
      }
    }
  }
  SUBCASE("a stopped scheduler shows up alone") {
    Stack stack([](auto& cfg) {
      cfg.sandbox = true;
      cfg.scheduler_enabled = false;
    });
    auto user = client_for(stack, kUserKey);
    const auto report = mock_test(user, "ur5-1", "stack_color_blocks");
    CHECK(report.failing_subsystems() == std::vector<std::string>{"scheduler"});
    CHECK(Json(report).at("ok") == false);
  }
}
