#include "tablebench/gateway/gateway.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "tablebench/protocol/error.hpp"
#include "tablebench/protocol/validate.hpp"
#include "tablebench/sim/render.hpp"

namespace tb::gateway {

std::string_view to_string(RobotMode mode) {
  switch (mode) {
    case RobotMode::kReady: return "ready";
    case RobotMode::kResetting: return "resetting";
    case RobotMode::kMaintenance: return "maintenance";
  }
  return "?";
}

RobotGateway::RobotGateway(RobotSpec spec, sim::SimRobot robot, GatewayConfig config)
    : spec_(std::move(spec)), config_(config), robot_(std::move(robot)) {
  const auto problems = check_robot_spec(spec_);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidArgument, "robot spec: " + problems.front());
  if (spec_.archetype != robot_.archetype()) throw Error(ErrorCode::kInvalidArgument, "spec and sim archetypes differ");
  if (robot_.config().control_rate_hz > spec_.max_control_rate_hz) {
    throw Error(ErrorCode::kInvalidArgument, "sim control rate exceeds the spec's cap");
  }
  period_ns_ = std::llround(1e9 / robot_.config().control_rate_hz);
}

RobotGateway::~RobotGateway() { stop(); }

Nanos RobotGateway::stamp_locked() {
  last_stamp_ = std::max(sim_now_, last_stamp_ + 1);
  return last_stamp_;
}

QueueState RobotGateway::queue_state_locked() const {
  QueueState q;
  q.length = static_cast<std::int64_t>(pending_.size());
  q.executed_count = executed_count_;
  std::int64_t drain = 0;
  if (executing_) {
    q.executing = executing_->queued.action_id;
    const Nanos remaining = executing_->queued.action.duration_ms * 1'000'000 - executing_->elapsed;
    drain += std::max<Nanos>(0, (remaining + 999'999) / 1'000'000);
  }
  for (const auto& a : pending_) drain += a.action.duration_ms;
  q.estimated_drain_ms = drain;
  return q;
}

ObservationBundle RobotGateway::capture(const CaptureRequest& request) {
  std::vector<const CameraSpec*> cams;
  if (request.camera_ids) {
    std::set<std::string> seen;
    for (const auto& id : *request.camera_ids) {
      const auto* cam = spec_.find_camera(id);
      if (!cam) throw Error(ErrorCode::kNotFound, "robot " + spec_.robot_id + " has no camera '" + id + "'");
      if (!seen.insert(id).second) throw Error(ErrorCode::kInvalidArgument, "camera '" + id + "' requested twice");
      cams.push_back(cam);
    }
  } else {
    for (const auto& cam : spec_.cameras) cams.push_back(&cam);
  }

  ObservationBundle bundle;
  sim::SimSnapshot snap;
  {
    std::lock_guard lock(mu_);
    bundle.capture_id = ++capture_counter_;
    const Nanos t = stamp_locked();
    bundle.queue_snapshot = queue_state_locked();
    bundle.proprio = {robot_.joints(), robot_.gripper(), t};
    snap = robot_.snapshot();
  }
  // Rendering happens outside the lock so the executor keeps its rate.
  for (const auto* cam : cams) {
    bundle.frames.push_back({cam->camera_id, sim::render(snap, *cam), bundle.proprio.timestamp_ns, false});
  }
  return bundle;
}

EnqueueAck RobotGateway::enqueue(const ActionChunk& chunk, const std::optional<std::string>& expected_binding) {
  const auto verdict = validate_chunk(spec_, chunk);
  if (!verdict.valid()) throw Error(ErrorCode::kValidation, verdict.summary());
  EnqueueRecord record;
  {
    std::lock_guard lock(mu_);
    if (mode_ == RobotMode::kMaintenance) {
      throw Error(ErrorCode::kMaintenance, "robot " + spec_.robot_id + " is under maintenance");
    }
    if (mode_ == RobotMode::kResetting) {
      throw Error(ErrorCode::kMaintenance, "robot " + spec_.robot_id + " is resetting");
    }
    if (config_.require_binding && !binding_) {
      throw Error(ErrorCode::kConflict, "no rollout is active on robot " + spec_.robot_id);
    }
    if (expected_binding && binding_ != expected_binding) {
      throw Error(ErrorCode::kConflict, "rollout " + *expected_binding + " is not active on robot " + spec_.robot_id);
    }
    if (pending_.size() + chunk.actions.size() > config_.max_queue_depth) {
      throw Error(ErrorCode::kConflict, "queue depth limit " + std::to_string(config_.max_queue_depth) + " exceeded");
    }
    const Nanos t = sim_now_;
    for (const auto& a : chunk.actions) {
      const std::int64_t id = next_action_id_++;
      pending_.push_back({id, a, t, ActionStatus::kPending});
      record.ack.action_ids.push_back(id);
    }
    record.ack.queue = queue_state_locked();
    record.at = t;
    record.binding = binding_;
  }
  std::vector<std::function<void(const EnqueueRecord&)>> observers;
  {
    std::lock_guard lock(observers_mu_);
    observers = enqueue_observers_;
  }
  if (!observers.empty()) {
    record.chunk = chunk;
    for (const auto& fn : observers) fn(record);
  }
  return record.ack;
}

QueueState RobotGateway::queue_status() const {
  std::lock_guard lock(mu_);
  return queue_state_locked();
}

void RobotGateway::tick() {
  TickInfo info;
  sim::SimSnapshot snap;
  bool want_snapshot = false;
  {
    std::lock_guard lock(observers_mu_);
    want_snapshot = !tick_observers_.empty();
  }
  {
    std::lock_guard lock(mu_);
    sim_now_ += period_ns_;
    info.now = sim_now_;
    info.binding = binding_;
    if (mode_ == RobotMode::kResetting) {
      home_elapsed_ += period_ns_;
      const Nanos total = config_.home_duration_ms * 1'000'000;
      const double f = total > 0 ? std::min(1.0, static_cast<double>(home_elapsed_) / static_cast<double>(total)) : 1.0;
      std::vector<double> q(home_start_.size());
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = home_start_[i] * (1.0 - f);
      robot_.command_joints(q);
      if (f >= 1.0) mode_ = RobotMode::kReady;
    } else if (mode_ == RobotMode::kReady) {
      if (!executing_ && !pending_.empty()) {
        Executing ex;
        ex.queued = std::move(pending_.front());
        pending_.pop_front();
        ex.queued.state = ActionStatus::kExecuting;
        ex.start_joints = robot_.joints();
        info.started.push_back(ex.queued.action_id);
        executing_ = std::move(ex);
      }
      if (executing_) {
        auto& ex = *executing_;
        ex.elapsed += period_ns_;
        const Nanos duration = ex.queued.action.duration_ms * 1'000'000;
        const double f = std::min(1.0, static_cast<double>(ex.elapsed) / static_cast<double>(duration));
        const auto& target = ex.queued.action.target_joints;
        std::vector<double> q(target.size());
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = ex.start_joints[i] + f * (target[i] - ex.start_joints[i]);
        robot_.command_joints(q);
        if (ex.elapsed >= duration) {
          robot_.command_gripper(ex.queued.action.gripper_command);
          ex.queued.state = ActionStatus::kDone;
          ++executed_count_;
          info.finished.push_back(ex.queued.action_id);
          executing_.reset();
        }
      }
    }
    if (want_snapshot) snap = robot_.snapshot();
  }
  if (want_snapshot) {
    info.snapshot = &snap;
    std::vector<std::function<void(const TickInfo&)>> observers;
    {
      std::lock_guard lock(observers_mu_);
      observers = tick_observers_;
    }
    for (const auto& fn : observers) fn(info);
  }
}

void RobotGateway::run_ticks(std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) tick();
}

void RobotGateway::start(double acceleration) {
  if (thread_.joinable()) return;
  stop_ = false;
  thread_ = std::thread([this, acceleration] {
    using clock = std::chrono::steady_clock;
    const auto period = acceleration > 0 ? std::chrono::nanoseconds(static_cast<std::int64_t>(period_ns_ / acceleration))
                                         : std::chrono::nanoseconds(0);
    auto next = clock::now();
    while (!stop_) {
      tick();
      if (period.count() > 0) {
        next += period;
        const auto now = clock::now();
        // After a stall, resume from now rather than bursting to catch up.
        if (next < now - 50 * period) next = now;
        std::this_thread::sleep_until(next);
      } else {
        std::this_thread::yield();
      }
    }
  });
}

void RobotGateway::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

void RobotGateway::reset_robot(std::optional<sim::SceneState> scene, std::optional<std::uint64_t> noise_seed) {
  std::lock_guard lock(mu_);
  reset_locked(std::move(scene), noise_seed);
}

Nanos RobotGateway::begin_rollout(const std::string& rollout_id, sim::SceneState scene, std::uint64_t noise_seed) {
  std::lock_guard lock(mu_);
  reset_locked(std::move(scene), noise_seed);
  binding_ = rollout_id;
  return sim_now_;
}

void RobotGateway::reset_locked(std::optional<sim::SceneState> scene, std::optional<std::uint64_t> noise_seed) {
  if (noise_seed) robot_.reseed_noise(*noise_seed);
  pending_.clear();
  executing_.reset();
  executed_count_ = 0;
  fault_reason_.reset();
  robot_.release_all();
  if (scene) robot_.set_scene(std::move(*scene));
  if (config_.home_duration_ms > 0) {
    home_start_ = robot_.joints();
    home_elapsed_ = 0;
    mode_ = RobotMode::kResetting;
  } else {
    robot_.home();
    mode_ = RobotMode::kReady;
  }
}

void RobotGateway::signal_fault(const std::string& reason) {
  {
    std::lock_guard lock(mu_);
    mode_ = RobotMode::kMaintenance;
    fault_reason_ = reason;
  }
  std::vector<std::function<void(const std::string&, const std::string&)>> observers;
  {
    std::lock_guard lock(observers_mu_);
    observers = fault_observers_;
  }
  for (const auto& fn : observers) fn(spec_.robot_id, reason);
}

OverlayResult RobotGateway::overlay_preview(const RgbImage& reference, double alpha) const {
  const CameraSpec* main = nullptr;
  for (const auto& cam : spec_.cameras) {
    if (cam.role == CameraRole::kMain) main = &cam;
  }
  if (!main) throw Error(ErrorCode::kInternal, "robot has no main camera");
  if (reference.width != main->width || reference.height != main->height) {
    throw Error(ErrorCode::kInvalidArgument, "reference dimensions differ from the main camera");
  }
  return overlay(sim::render(sim_snapshot(), *main), reference, alpha);
}

void RobotGateway::bind(std::optional<std::string> rollout_id) {
  std::lock_guard lock(mu_);
  binding_ = std::move(rollout_id);
}

std::optional<std::string> RobotGateway::binding() const {
  std::lock_guard lock(mu_);
  return binding_;
}

RobotMode RobotGateway::mode() const {
  std::lock_guard lock(mu_);
  return mode_;
}

std::optional<std::string> RobotGateway::fault_reason() const {
  std::lock_guard lock(mu_);
  return fault_reason_;
}

Nanos RobotGateway::now() const {
  std::lock_guard lock(mu_);
  return sim_now_;
}

sim::SimSnapshot RobotGateway::sim_snapshot() const {
  std::lock_guard lock(mu_);
  return robot_.snapshot();
}

RgbImage RobotGateway::render_camera(const std::string& camera_id) const {
  const auto* cam = spec_.find_camera(camera_id);
  if (!cam) throw Error(ErrorCode::kNotFound, "robot " + spec_.robot_id + " has no camera '" + camera_id + "'");
  return sim::render(sim_snapshot(), *cam);
}

void RobotGateway::on_tick(std::function<void(const TickInfo&)> fn) {
  std::lock_guard lock(observers_mu_);
  tick_observers_.push_back(std::move(fn));
}

void RobotGateway::on_enqueue(std::function<void(const EnqueueRecord&)> fn) {
  std::lock_guard lock(observers_mu_);
  enqueue_observers_.push_back(std::move(fn));
}

void RobotGateway::on_fault(std::function<void(const std::string&, const std::string&)> fn) {
  std::lock_guard lock(observers_mu_);
  fault_observers_.push_back(std::move(fn));
}

}  // namespace tb::gateway
