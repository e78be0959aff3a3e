#include <doctest.h>

#include <chrono>
#include <thread>

#include "support/queue_props.hpp"
#include "tablebench/gateway/gateway.hpp"
#include "tablebench/gateway/overlay.hpp"
#include "tablebench/protocol/error.hpp"
#include "tablebench/sim/render.hpp"
#include "tablebench/sim/task.hpp"

using namespace tb;
using namespace tb::gateway;

namespace {

std::unique_ptr<RobotGateway> make_gateway(Archetype a = Archetype::kArx5, GatewayConfig cfg = {}) {
  return std::make_unique<RobotGateway>(sim::default_robot_spec(a, "r1"), sim::SimRobot(a, {}), cfg);
}

Action hold_action(const RobotGateway& gw, std::int64_t ms) {
  Action a;
  a.target_joints.assign(static_cast<std::size_t>(gw.spec().total_dof()), 0.0);
  a.gripper_command.assign(static_cast<std::size_t>(gw.spec().arms), 1.0);
  a.duration_ms = ms;
  return a;
}

ActionChunk chunk_of(std::vector<Action> actions) { return ActionChunk{1, std::move(actions)}; }

RgbImage solid(int w, int h, std::uint8_t v) {
  RgbImage img(w, h);
  std::fill(img.pixels.begin(), img.pixels.end(), v);
  return img;
}

Error expect_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::kInternal, "unreachable");
}

}  // namespace

TEST_CASE("capture") {
  auto gw = make_gateway();
  SUBCASE("successive captures carry strictly increasing timestamps") {
    const auto a = gw->capture({});
    const auto b = gw->capture({});
    CHECK(b.capture_id == a.capture_id + 1);
    CHECK(b.proprio.timestamp_ns > a.proprio.timestamp_ns);
    for (const auto& f : a.frames) CHECK(f.timestamp_ns == a.proprio.timestamp_ns);
    CHECK(a.frames.size() == gw->spec().cameras.size());
    CHECK_FALSE(a.frames.front().depth_present);
  }
  SUBCASE("queue snapshot reports pending actions") {
    gw->enqueue(chunk_of({hold_action(*gw, 100), hold_action(*gw, 100), hold_action(*gw, 100)}));
    const auto b = gw->capture({});
    CHECK(b.queue_snapshot.length == 3);
    CHECK(b.queue_snapshot == gw->queue_status());
  }
  SUBCASE("camera subset") {
    const auto b = gw->capture(CaptureRequest{std::vector<std::string>{"main"}});
    REQUIRE(b.frames.size() == 1);
    CHECK(b.frames[0].camera_id == "main");
    CHECK(gw->spec().find_camera("main")->role == CameraRole::kMain);
    CHECK(expect_error([&] { gw->capture(CaptureRequest{std::vector<std::string>{"thermal"}}); }).code() ==
          ErrorCode::kNotFound);
  }
  SUBCASE("timestamps follow sim time") {
    gw->run_ticks(10);
    const auto b = gw->capture({});
    CHECK(b.proprio.timestamp_ns >= 10 * gw->tick_period_ns());
  }
}

TEST_CASE("enqueue") {
  auto gw = make_gateway();
  SUBCASE("three actions into an empty queue") {
    const auto ack = gw->enqueue(chunk_of({hold_action(*gw, 10), hold_action(*gw, 10), hold_action(*gw, 10)}));
    CHECK(ack.action_ids == std::vector<std::int64_t>{1, 2, 3});
    CHECK(ack.queue.length == 3);
  }
  SUBCASE("an out-of-limit target is rejected and nothing is queued") {
    auto bad = hold_action(*gw, 10);
    bad.target_joints[0] = 10.0;
    const auto before = gw->queue_status();
    CHECK(expect_error([&] { gw->enqueue(chunk_of({hold_action(*gw, 10), bad})); }).code() ==
          ErrorCode::kValidation);
    CHECK(gw->queue_status() == before);
  }
  SUBCASE("overflow rejects the whole chunk") {
    GatewayConfig cfg;
    cfg.max_queue_depth = 4;
    auto small = make_gateway(Archetype::kArx5, cfg);
    small->enqueue(chunk_of({hold_action(*small, 10), hold_action(*small, 10), hold_action(*small, 10)}));
    CHECK(expect_error([&] {
            small->enqueue(chunk_of({hold_action(*small, 10), hold_action(*small, 10)}));
          }).code() == ErrorCode::kConflict);
    CHECK(small->queue_status().length == 3);
  }
  SUBCASE("binding gate") {
    GatewayConfig cfg;
    cfg.require_binding = true;
    auto gated = make_gateway(Archetype::kArx5, cfg);
    CHECK(expect_error([&] { gated->enqueue(chunk_of({hold_action(*gated, 10)})); }).code() == ErrorCode::kConflict);
    gated->bind("rollout-1");
    CHECK_NOTHROW(gated->enqueue(chunk_of({hold_action(*gated, 10)})));
  }
  SUBCASE("concurrent chunks get contiguous id ranges") {
    GatewayConfig deep;
    deep.max_queue_depth = 4096;
    gw = make_gateway(Archetype::kArx5, deep);
    std::vector<std::thread> threads;
    std::mutex mu;
    std::vector<std::vector<std::int64_t>> acks;
    std::atomic<bool> done{false};
    std::thread ticker([&] {
      while (!done) gw->tick();
    });
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&] {
        for (int k = 0; k < 50; ++k) {
          auto ack = gw->enqueue(chunk_of({hold_action(*gw, 5), hold_action(*gw, 5), hold_action(*gw, 5),
                                           hold_action(*gw, 5)}));
          std::lock_guard lock(mu);
          acks.push_back(ack.action_ids);
        }
      });
    }
    for (auto& t : threads) t.join();
    done = true;
    ticker.join();
    std::vector<std::int64_t> all;
    for (const auto& ids : acks) {
      REQUIRE(ids.size() == 4);
      CHECK(ids[3] - ids[0] == 3);
      all.insert(all.end(), ids.begin(), ids.end());
    }
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.back() == 8 * 50 * 4);
  }
}

TEST_CASE("queue_status") {
  auto gw = make_gateway();
  SUBCASE("idle") {
    const auto s = gw->queue_status();
    CHECK(s.length == 0);
    CHECK_FALSE(s.executing.has_value());
    CHECK(s.estimated_drain_ms == 0);
  }
  SUBCASE("sum of pending durations") {
    gw->enqueue(chunk_of({hold_action(*gw, 100), hold_action(*gw, 250)}));
    CHECK(gw->queue_status().estimated_drain_ms == 350);
  }
  SUBCASE("half-elapsed action plus one pending") {
    gw->enqueue(chunk_of({hold_action(*gw, 200), hold_action(*gw, 300)}));
    const Nanos advanced = 100'000'000;
    gw->run_ticks(advanced / gw->tick_period_ns());
    const auto s = gw->queue_status();
    REQUIRE(s.executing.has_value());
    CHECK(*s.executing == 1);
    CHECK(s.length == 1);
    // Remaining time of the running action from the advanced clock, plus the pending one.
    CHECK(s.estimated_drain_ms == (200 - advanced / 1'000'000) + 300);
    CHECK(s.estimated_drain_ms == 400);
  }
}

TEST_CASE("executor") {
  auto gw = make_gateway(Archetype::kArx5);
  REQUIRE(gw->tick_period_ns() == 10'000'000);
  SUBCASE("linear interpolation midpoint") {
    auto a = hold_action(*gw, 100);
    a.target_joints[0] = 1.0;
    gw->enqueue(chunk_of({a}));
    gw->run_ticks(5);
    CHECK(gw->sim_snapshot().joints[0] == 0.5);
    gw->run_ticks(5);
    CHECK(gw->sim_snapshot().joints[0] == 1.0);
    CHECK(gw->queue_status().executed_count == 1);
  }
  SUBCASE("idle ticks change nothing") {
    const auto before = gw->capture({});
    gw->run_ticks(20);
    const auto after = gw->capture({});
    CHECK(before.proprio.joint_positions == after.proprio.joint_positions);
    CHECK(before.proprio.gripper_openness == after.proprio.gripper_openness);
  }
  SUBCASE("gripper applies at completion") {
    auto a = hold_action(*gw, 50);
    a.gripper_command = {0.0};
    gw->enqueue(chunk_of({a}));
    gw->run_ticks(4);
    CHECK(gw->sim_snapshot().gripper[0] == 1.0);
    gw->run_ticks(1);
    CHECK(gw->sim_snapshot().gripper[0] == 0.0);
  }
  SUBCASE("random schedules keep FIFO order, contiguity and timing") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const auto r = testing::run_queue_schedule(seed, seed % 6 == 0);
      CHECK_MESSAGE(r.ok(), (r.violations.empty() ? "" : r.violations.front()));
    }
  }
}

TEST_CASE("reset_robot") {
  GatewayConfig cfg;
  cfg.home_duration_ms = 200;
  auto gw = make_gateway(Archetype::kArx5, cfg);
  auto a = hold_action(*gw, 50);
  a.target_joints[0] = 0.8;
  SUBCASE("after drain") {
    gw->enqueue(chunk_of({a}));
    gw->run_ticks(5);
    gw->capture({});
    gw->reset_robot();
    gw->run_ticks(20);
    const auto s = gw->queue_status();
    CHECK(s.length == 0);
    CHECK(s.executed_count == 0);
    CHECK(gw->sim_snapshot().joints[0] == 0.0);
    CHECK(gw->capture({}).capture_id == 2);
  }
  SUBCASE("pending actions are discarded and the arm homes") {
    gw->enqueue(chunk_of({a, a, a, a, a}));
    gw->run_ticks(3);
    CHECK(gw->queue_status().length == 4);
    gw->reset_robot();
    CHECK(gw->queue_status().length == 0);
    CHECK_FALSE(gw->queue_status().executing.has_value());
    gw->run_ticks(20);
    for (double q : gw->sim_snapshot().joints) CHECK(q == 0.0);
  }
  SUBCASE("enqueue while resetting is refused") {
    gw->reset_robot();
    CHECK(gw->mode() == RobotMode::kResetting);
    CHECK(expect_error([&] { gw->enqueue(chunk_of({a})); }).code() == ErrorCode::kMaintenance);
    gw->run_ticks(20);
    CHECK(gw->mode() == RobotMode::kReady);
    CHECK_NOTHROW(gw->enqueue(chunk_of({a})));
  }
}

TEST_CASE("faults freeze the queue") {
  auto gw = make_gateway();
  std::vector<std::string> seen;
  gw->on_fault([&](const std::string& robot, const std::string& reason) { seen.push_back(robot + ":" + reason); });
  gw->enqueue(chunk_of({hold_action(*gw, 100), hold_action(*gw, 100)}));
  gw->run_ticks(3);
  const auto before = gw->queue_status();
  gw->signal_fault("joint 3 overheated");
  gw->run_ticks(50);
  CHECK(gw->queue_status() == before);
  CHECK(expect_error([&] { gw->enqueue(chunk_of({hold_action(*gw, 10)})); }).code() == ErrorCode::kMaintenance);
  CHECK(seen == std::vector<std::string>{"r1:joint 3 overheated"});
  gw->reset_robot();
  CHECK(gw->mode() == RobotMode::kReady);
  CHECK_FALSE(gw->fault_reason().has_value());
}

TEST_CASE("overlay") {
  SUBCASE("identical images match perfectly") {
    const auto img = solid(256, 192, 90);
    CHECK(match_score(img, img) == 0.0);
  }
  SUBCASE("black against white scores 255") { CHECK(match_score(solid(256, 192, 0), solid(256, 192, 255)) == 255.0); }
  SUBCASE("half blend rounds up") {
    const auto out = blend(solid(4, 4, 0), solid(4, 4, 255), 0.5);
    CHECK(out.pixels[0] == 128);
    CHECK(blend(solid(4, 4, 10), solid(4, 4, 200), 0.0) == solid(4, 4, 10));
    CHECK(blend(solid(4, 4, 10), solid(4, 4, 200), 1.0) == solid(4, 4, 200));
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(match_score(solid(256, 192, 0), solid(128, 96, 0)), Error);
    auto gw = make_gateway();
    CHECK_THROWS_AS(gw->overlay_preview(solid(10, 10, 0), 0.5), Error);
  }
  SUBCASE("preview against the live main view scores zero") {
    auto gw = make_gateway();
    const auto catalog = sim::TaskCatalog::load_dir(std::string(TB_SOURCE_DIR) + "/tasks");
    const auto& task = catalog.get("open_the_drawer");
    gw->reset_robot(sim::randomized_scene(task, 4));
    const auto ref = gw->render_camera("main");
    const auto r = gw->overlay_preview(ref, 0.5);
    CHECK(r.match_score == 0.0);
    CHECK(r.blended == ref);
    gw->reset_robot(sim::randomized_scene(task, 5));
    CHECK(gw->overlay_preview(ref, 0.5).match_score > 0.0);
  }
}

TEST_CASE("capture does not stall the executor") {
  auto gw = make_gateway();
  gw->enqueue(chunk_of(std::vector<Action>(200, hold_action(*gw, 20))));
  gw->start(1.0);
  const auto period = gw->tick_period_ns();
  Nanos worst = 0;
  for (int i = 0; i < 20; ++i) {
    const Nanos t0 = gw->now();
    gw->capture({});
    worst = std::max(worst, gw->now() - t0);
  }
  const Nanos before = gw->now();
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  const Nanos progressed = gw->now() - before;
  gw->stop();
  // Each capture finishes within a sim-time budget of 20 control periods.
  CHECK(worst <= 20 * period);
  CHECK(progressed >= 5 * period);
}
