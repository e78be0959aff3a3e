#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tablebench/gateway/overlay.hpp"
#include "tablebench/protocol/types.hpp"
#include "tablebench/sim/robot.hpp"

namespace tb::gateway {

enum class ActionStatus { kPending, kExecuting, kDone };

struct QueuedAction {
  std::int64_t action_id = 0;
  Action action;
  Nanos enqueued_at = 0;
  ActionStatus state = ActionStatus::kPending;
};

enum class RobotMode { kReady, kResetting, kMaintenance };

std::string_view to_string(RobotMode mode);

struct GatewayConfig {
  std::size_t max_queue_depth = 1024;
  // Sim time the arm takes to drive home during reset_robot; 0 is instant.
  std::int64_t home_duration_ms = 0;
  // When set, enqueue is refused unless a rollout is bound.
  bool require_binding = false;
};

// What one executor tick did, handed to observers after the lock is released.
struct TickInfo {
  Nanos now = 0;
  std::vector<std::int64_t> started;
  std::vector<std::int64_t> finished;
  const sim::SimSnapshot* snapshot = nullptr;
  std::optional<std::string> binding;
};

struct EnqueueRecord {
  Nanos at = 0;
  ActionChunk chunk;
  EnqueueAck ack;
  std::optional<std::string> binding;
};

// The online front of one simulated robot: capture, the irrevocable FIFO action
// queue and its fixed-rate executor. All public members are thread-safe.
class RobotGateway {
 public:
  RobotGateway(RobotSpec spec, sim::SimRobot robot, GatewayConfig config = {});
  ~RobotGateway();

  RobotGateway(const RobotGateway&) = delete;
  RobotGateway& operator=(const RobotGateway&) = delete;

  const RobotSpec& spec() const { return spec_; }
  const GatewayConfig& config() const { return config_; }
  Nanos tick_period_ns() const { return period_ns_; }

  // --- client surface ---
  ObservationBundle capture(const CaptureRequest& request);
  // With `expected_binding` the chunk is refused (kConflict) unless that
  // rollout is the one bound, checked atomically with the append.
  EnqueueAck enqueue(const ActionChunk& chunk, const std::optional<std::string>& expected_binding = std::nullopt);
  QueueState queue_status() const;

  // --- executor ---
  // Advances sim time by one control period.
  void tick();
  void run_ticks(std::int64_t n);
  // Runs ticks on a background thread at `acceleration` times real time;
  // 0 runs as fast as possible.
  void start(double acceleration);
  void stop();
  bool running() const { return thread_.joinable(); }

  // --- tester / platform surface ---
  // Discards pending actions, drives home, resets executed_count. The capture
  // counter survives. A new scene, when given, replaces the current one.
  void reset_robot(std::optional<sim::SceneState> scene = std::nullopt,
                   std::optional<std::uint64_t> noise_seed = std::nullopt);
  // reset_robot plus bind under one lock, so no tick or enqueue sees the
  // rollout bound to the previous scene. Returns the sim time of the reset.
  Nanos begin_rollout(const std::string& rollout_id, sim::SceneState scene, std::uint64_t noise_seed);
  void signal_fault(const std::string& reason);
  OverlayResult overlay_preview(const RgbImage& reference, double alpha) const;
  void bind(std::optional<std::string> rollout_id);
  std::optional<std::string> binding() const;
  RobotMode mode() const;
  std::optional<std::string> fault_reason() const;
  Nanos now() const;
  sim::SimSnapshot sim_snapshot() const;
  RgbImage render_camera(const std::string& camera_id) const;

  // Observers run on the ticking thread, outside the gateway lock.
  void on_tick(std::function<void(const TickInfo&)> fn);
  void on_enqueue(std::function<void(const EnqueueRecord&)> fn);
  void on_fault(std::function<void(const std::string& robot_id, const std::string& reason)> fn);

 private:
  struct Executing {
    QueuedAction queued;
    std::vector<double> start_joints;
    Nanos elapsed = 0;
  };

  QueueState queue_state_locked() const;
  void reset_locked(std::optional<sim::SceneState> scene, std::optional<std::uint64_t> noise_seed);
  Nanos stamp_locked();

  RobotSpec spec_;
  GatewayConfig config_;
  Nanos period_ns_ = 0;

  mutable std::mutex mu_;
  sim::SimRobot robot_;
  std::deque<QueuedAction> pending_;
  std::optional<Executing> executing_;
  std::int64_t next_action_id_ = 1;
  std::int64_t executed_count_ = 0;
  std::int64_t capture_counter_ = 0;
  Nanos sim_now_ = 0;
  Nanos last_stamp_ = 0;
  RobotMode mode_ = RobotMode::kReady;
  std::optional<std::string> fault_reason_;
  std::optional<std::string> binding_;
  // Homing motion while resetting.
  std::vector<double> home_start_;
  Nanos home_elapsed_ = 0;

  std::mutex observers_mu_;
  std::vector<std::function<void(const TickInfo&)>> tick_observers_;
  std::vector<std::function<void(const EnqueueRecord&)>> enqueue_observers_;
  std::vector<std::function<void(const std::string&, const std::string&)>> fault_observers_;

  std::thread thread_;
  std::atomic<bool> stop_{false};
};

}  // namespace tb::gateway
