#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tablebench/protocol/image.hpp"

namespace tb {

using Nanos = std::int64_t;

enum class Archetype { kUr5, kFranka, kAloha, kArx5 };

inline constexpr Archetype kAllArchetypes[] = {Archetype::kUr5, Archetype::kFranka,
                                               Archetype::kAloha, Archetype::kArx5};

struct ArchetypeTraits {
  int arms;
  int dof_per_arm;
  double rate_cap_hz;
};

ArchetypeTraits traits_of(Archetype archetype);
std::string_view to_string(Archetype archetype);
std::optional<Archetype> parse_archetype(std::string_view name);

enum class CameraRole { kMain, kWrist, kSide };

std::string_view to_string(CameraRole role);
std::optional<CameraRole> parse_camera_role(std::string_view name);

struct CameraSpec {
  std::string camera_id;
  CameraRole role = CameraRole::kMain;
  int width = 0;
  int height = 0;
  // Arm index the wrist camera is mounted on; ignored for other roles.
  int arm = 0;

  bool operator==(const CameraSpec&) const = default;
};

struct JointLimit {
  double min = 0.0;
  double max = 0.0;

  bool operator==(const JointLimit&) const = default;
};

struct RobotSpec {
  std::string robot_id;
  Archetype archetype = Archetype::kUr5;
  int arms = 1;
  int dof_per_arm = 6;
  // Flattened over arms, left arm first.
  std::vector<JointLimit> joint_limits;
  double max_control_rate_hz = 100.0;
  std::vector<CameraSpec> cameras;

  int total_dof() const { return arms * dof_per_arm; }
  const CameraSpec* find_camera(std::string_view camera_id) const;

  bool operator==(const RobotSpec&) const = default;
};

// Lists every violated RobotSpec invariant; empty means valid.
std::vector<std::string> check_robot_spec(const RobotSpec& spec);

struct Action {
  // Flat vector over arms, left arm first.
  std::vector<double> target_joints;
  // One entry per arm: 0 closed, 1 fully open.
  std::vector<double> gripper_command;
  std::int64_t duration_ms = 0;

  bool operator==(const Action&) const = default;
};

struct ActionChunk {
  std::int64_t client_seq = 0;
  std::vector<Action> actions;

  bool operator==(const ActionChunk&) const = default;
};

struct QueueState {
  std::int64_t length = 0;
  std::optional<std::int64_t> executing;
  std::int64_t executed_count = 0;
  std::int64_t estimated_drain_ms = 0;

  bool operator==(const QueueState&) const = default;
};

struct Frame {
  std::string camera_id;
  RgbImage rgb;
  Nanos timestamp_ns = 0;
  // Depth is part of the schema but never produced by the simulator.
  bool depth_present = false;

  bool operator==(const Frame&) const = default;
};

struct Proprioception {
  std::vector<double> joint_positions;
  std::vector<double> gripper_openness;
  Nanos timestamp_ns = 0;

  bool operator==(const Proprioception&) const = default;
};

struct ObservationBundle {
  std::int64_t capture_id = 0;
  std::vector<Frame> frames;
  Proprioception proprio;
  QueueState queue_snapshot;

  bool operator==(const ObservationBundle&) const = default;
};

struct CaptureRequest {
  // Absent means every camera on the robot.
  std::optional<std::vector<std::string>> camera_ids;

  bool operator==(const CaptureRequest&) const = default;
};

struct EnqueueAck {
  std::vector<std::int64_t> action_ids;
  QueueState queue;

  bool operator==(const EnqueueAck&) const = default;
};

struct JobSubmission {
  std::vector<std::string> task_set;
  std::string display_name;

  bool operator==(const JobSubmission&) const = default;
};

enum class JobState { kQueued, kNotified, kRunning, kPausedMaintenance, kCompleted, kRevoked };
enum class EvalSetting { kTaskSpecific, kGeneralist };
enum class RolloutPhase { kIdle, kActive, kEnded };

std::string_view to_string(JobState state);
std::string_view to_string(EvalSetting setting);
std::string_view to_string(RolloutPhase phase);

struct TaskProgress {
  std::string task_id;
  int completed = 0;
  int total = 10;

  bool operator==(const TaskProgress&) const = default;
};

// Tells the client which rollout is underway so it knows when to stop acting.
struct RolloutInfo {
  std::optional<std::string> rollout_id;
  int index = 0;
  RolloutPhase phase = RolloutPhase::kIdle;

  bool operator==(const RolloutInfo&) const = default;
};

struct JobStatus {
  std::string job_id;
  JobState status = JobState::kQueued;
  EvalSetting setting = EvalSetting::kTaskSpecific;
  // Absent when the viewer must not learn the model identity.
  std::optional<std::string> display_name;
  std::vector<std::string> task_set;
  bool approved = false;
  std::optional<std::string> robot_id;
  Nanos expected_start_ns = 0;
  std::optional<std::string> current_task;
  std::optional<std::string> prompt;
  std::vector<TaskProgress> progress;
  RolloutInfo rollout;

  bool operator==(const JobStatus&) const = default;
};

enum class GradeEventType { kStageComplete, kRetry, kFinalize };
enum class TerminationReason { kStageScoreNegative, kRetryLimit, kManual, kCompleted };

std::string_view to_string(GradeEventType type);
std::string_view to_string(TerminationReason reason);

struct GradeEvent {
  GradeEventType type = GradeEventType::kStageComplete;
  std::optional<int> stage;
  std::optional<TerminationReason> reason;

  bool operator==(const GradeEvent&) const = default;
};

struct RolloutResult {
  bool success = false;
  double progress_score = 0.0;
  TerminationReason terminated_reason = TerminationReason::kManual;
  std::int64_t duration_ms = 0;

  bool operator==(const RolloutResult&) const = default;
};

}  // namespace tb
