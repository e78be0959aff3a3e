#include "tablebench/client/loop.hpp"

#include <set>
#include <thread>

#include "tablebench/sim/oracle.hpp"
#include "tablebench/sim/robot.hpp"

namespace tb::client {
namespace {

using Clock = std::chrono::steady_clock;

JobContext context_of(const JobStatus& s) {
  JobContext c;
  c.job_id = s.job_id;
  c.task_id = s.current_task.value_or(s.task_set.empty() ? "" : s.task_set.front());
  c.robot_id = s.robot_id.value_or("");
  c.prompt = s.prompt.value_or("");
  c.display_name = s.display_name.value_or("");
  return c;
}

bool rollout_open(const JobStatus& s, const std::string& rollout_id) {
  return s.status == JobState::kRunning && s.rollout.phase == RolloutPhase::kActive &&
         s.rollout.rollout_id == rollout_id;
}

}  // namespace

void to_json(Json& j, const Transcript& v) {
  Json captures = Json::array();
  for (const auto& c : v.captures) {
    captures.push_back({{"capture_id", c.capture_id},
                        {"queue_length", c.queue_length},
                        {"executing", c.executing ? Json(*c.executing) : Json(nullptr)}});
  }
  Json enqueues = Json::array();
  for (const auto& e : v.enqueues) enqueues.push_back({{"client_seq", e.client_seq}, {"action_ids", e.action_ids}});
  j = Json{{"rollout_id", v.rollout_id}, {"captures", captures}, {"enqueues", enqueues}, {"end_reason", v.end_reason}};
}

JobContext await_job(Client& client, const std::string& job_id, PolicyAdapter& adapter, const LoopConfig& config) {
  const auto deadline = Clock::now() + config.max_wait;
  bool warmed = false;
  while (true) {
    const auto s = client.job(job_id);
    if (s.status == JobState::kRevoked) throw JobRevoked(job_id);
    if (s.status == JobState::kCompleted) throw Error(ErrorCode::kConflict, "job " + job_id + " already completed");
    const bool started = s.status == JobState::kRunning || s.status == JobState::kPausedMaintenance;
    if ((s.status == JobState::kNotified || started) && !warmed) {
      adapter.warm_up(context_of(s));
      warmed = true;
    }
    if (started) return context_of(s);
    if (Clock::now() > deadline) throw Error(ErrorCode::kUnavailable, "job " + job_id + " did not start in time");
    std::this_thread::sleep_for(config.poll_interval);
  }
}

Transcript run_rollout(Client& client, PolicyAdapter& adapter, const JobContext& context,
                       const std::string& rollout_id, const LoopConfig& config) {
  Transcript t;
  t.rollout_id = rollout_id;
  const auto deadline = Clock::now() + config.max_rollout_duration;
  std::int64_t seq = 0;
  adapter.begin_rollout(context, client, rollout_id);
  const auto still_open = [&] {
    const auto s = client.job(context.job_id);
    if (s.status == JobState::kRevoked) throw JobRevoked(context.job_id);
    return rollout_open(s, rollout_id);
  };
  while (true) {
    if (Clock::now() > deadline) {
      t.end_reason = "max_duration";
      return t;
    }
    try {
      if (!still_open()) break;
      if (config.drain_before_capture) {
        bool ended = false;
        while (true) {
          const auto q = client.queue(context.robot_id);
          if (q.length == 0 && !q.executing) break;
          std::this_thread::sleep_for(config.poll_interval);
          if (!still_open()) {
            ended = true;
            break;
          }
        }
        if (ended) break;
      }
      const auto obs = client.capture(context.robot_id);
      t.captures.push_back({obs.capture_id, obs.queue_snapshot.length, obs.queue_snapshot.executing});
      auto chunk = adapter.infer(obs, context.prompt);
      if (chunk.actions.empty()) {
        std::this_thread::sleep_for(config.poll_interval);
        continue;
      }
      chunk.client_seq = ++seq;
      const auto ack = client.enqueue(context.robot_id, chunk, rollout_id);
      t.enqueues.push_back({chunk.client_seq, ack.action_ids});
    } catch (const JobRevoked&) {
      throw;
    } catch (const Error& e) {
      // Calls fail once the server closes the rollout; anything else propagates.
      const bool expected = e.code() == ErrorCode::kConflict || e.code() == ErrorCode::kForbidden ||
                            e.code() == ErrorCode::kMaintenance;
      if (expected && !still_open()) break;
      throw;
    }
  }
  t.end_reason = "rollout_ended";
  return t;
}

JobReport run_job(Client& client, const std::string& job_id, PolicyAdapter& adapter, const LoopConfig& config) {
  JobReport report;
  report.context = await_job(client, job_id, adapter, config);
  std::set<std::string> done;
  const auto deadline = Clock::now() + config.max_wait;
  while (true) {
    const auto s = client.job(job_id);
    if (s.status == JobState::kRevoked) throw JobRevoked(job_id);
    if (s.status == JobState::kCompleted) {
      report.final_status = s;
      break;
    }
    if (s.status == JobState::kRunning && s.rollout.phase == RolloutPhase::kActive && s.rollout.rollout_id &&
        !done.count(*s.rollout.rollout_id)) {
      const auto ctx = context_of(s);
      report.context = ctx;
      report.transcripts.push_back(run_rollout(client, adapter, ctx, *s.rollout.rollout_id, config));
      done.insert(*s.rollout.rollout_id);
      continue;
    }
    if (Clock::now() > deadline) throw Error(ErrorCode::kUnavailable, "job " + job_id + " did not finish in time");
    std::this_thread::sleep_for(config.poll_interval);
  }
  report.results = client.job_results(job_id);
  return report;
}

OracleAdapter::OracleAdapter(sim::TaskCatalog catalog, std::string display_name, std::size_t chunk_size)
    : catalog_(std::move(catalog)), display_name_(std::move(display_name)), chunk_size_(std::max<std::size_t>(1, chunk_size)) {}

void OracleAdapter::warm_up(const JobContext&) { ++warm_ups_; }

void OracleAdapter::begin_rollout(const JobContext& context, Client& client, const std::string&) {
  const auto state = client.sim_state(context.robot_id);
  const auto& snap = state.at("snapshot");
  const auto archetype = parse_archetype(snap.at("archetype").get<std::string>());
  if (!archetype) throw Error(ErrorCode::kDecode, "sim_state names an unknown archetype");
  sim::SimRobot robot(*archetype, sim::SimConfig{});
  robot.set_scene(snap.at("scene").get<sim::SceneState>());
  robot.command_joints(snap.at("joints").get<std::vector<double>>());
  plan_ = sim::oracle_plan(catalog_.get(context.task_id), robot.snapshot());
  next_ = 0;
}

ActionChunk OracleAdapter::infer(const ObservationBundle&, const std::string&) {
  ActionChunk chunk;
  const auto end = std::min(plan_.size(), next_ + chunk_size_);
  for (; next_ < end; ++next_) chunk.actions.push_back(plan_[next_]);
  return chunk;
}

bool MockReport::ok() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.ok; });
}

std::vector<std::string> MockReport::failing_subsystems() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (!c.ok && std::find(out.begin(), out.end(), c.subsystem) == out.end()) out.push_back(c.subsystem);
  }
  return out;
}

void to_json(Json& j, const MockReport& v) {
  Json checks = Json::array();
  for (const auto& c : v.checks) {
    checks.push_back({{"name", c.name},
                      {"subsystem", c.subsystem},
                      {"ok", c.ok},
                      {"status", c.status},
                      {"latency_ms", c.latency_ms},
                      {"detail", c.detail}});
  }
  j = Json{{"ok", v.ok()}, {"checks", checks}, {"failing_subsystems", v.failing_subsystems()}};
}

MockReport mock_test(Client& client, const std::string& robot_id, const std::string& task_id) {
  MockReport report;
  const auto check = [&](const std::string& name, const std::string& subsystem, auto&& fn) {
    MockCheck c;
    c.name = name;
    c.subsystem = subsystem;
    const auto start = Clock::now();
    try {
      c.detail = fn();
      c.ok = true;
      c.status = 200;
    } catch (const Error& e) {
      c.status = e.code() == ErrorCode::kUnavailable && std::string(e.what()).find("failed:") != std::string::npos
                     ? 0
                     : http_status(e.code());
      c.detail = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    c.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    report.checks.push_back(c);
    return c.ok;
  };

  check("health", "gateway", [&] { return client.health().dump(); });
  check("auth", "auth", [&] { return client.whoami().value("role", ""); });
  std::string robot = robot_id;
  check("robots", "gateway", [&] {
    const auto list = client.robots();
    if (robot.empty() && !list.empty()) robot = list.front().at("spec").at("robot_id").get<std::string>();
    if (robot.empty()) throw Error(ErrorCode::kNotFound, "no robots registered");
    return robot;
  });
  std::optional<ObservationBundle> obs;
  check("capture", "gateway", [&] {
    obs = client.capture(robot, CaptureRequest{std::vector<std::string>{"main"}});
    return "capture " + std::to_string(obs->capture_id);
  });
  check("enqueue", "gateway", [&] {
    if (!obs) throw Error(ErrorCode::kUnavailable, "no observation to hold position from");
    ActionChunk chunk;
    chunk.client_seq = 1;
    chunk.actions.push_back({obs->proprio.joint_positions, obs->proprio.gripper_openness, 100});
    const auto ack = client.enqueue(robot, chunk);
    return "action " + std::to_string(ack.action_ids.front());
  });
  check("queue_status", "gateway", [&] {
    const auto q = client.queue(robot);
    return "length " + std::to_string(q.length);
  });
  std::string rollout;
  check("grading_open", "grading", [&] {
    rollout = client.open_sandbox_rollout(robot, task_id).at("rollout_id").get<std::string>();
    return rollout;
  });
  check("grading_event", "grading", [&] {
    if (rollout.empty()) throw Error(ErrorCode::kUnavailable, "no sandbox rollout");
    const auto view = client.grade(rollout, GradeEvent{GradeEventType::kStageComplete, 0, std::nullopt});
    return "score " + std::to_string(view.at("progress_score").get<double>());
  });
  check("grading_readback", "grading", [&] {
    if (rollout.empty()) throw Error(ErrorCode::kUnavailable, "no sandbox rollout");
    const auto view = client.rollout(rollout);
    if (!view.at("stages").at(0).at("completed").get<bool>()) {
      throw Error(ErrorCode::kInternal, "stage 0 not recorded");
    }
    return "stage 0 recorded";
  });
  check("jobs", "scheduler", [&] { return std::to_string(client.jobs().size()) + " jobs"; });
  return report;
}

}  // namespace tb::client
