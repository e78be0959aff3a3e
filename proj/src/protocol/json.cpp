#include "tablebench/protocol/json.hpp"

namespace tb {
namespace {

template <class Enum, class Parse>
Enum parse_enum(const Json& j, std::string_view what, Parse parse) {
  if (!j.is_string()) throw ShapeError("", std::string(what) + " string");
  auto parsed = parse(j.get<std::string>());
  if (!parsed) throw ShapeError("", "known " + std::string(what));
  return *parsed;
}

template <class Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view name, const Enum (&all)[N]) {
  for (Enum e : all) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

constexpr JobState kJobStates[] = {JobState::kQueued, JobState::kNotified, JobState::kRunning,
                                   JobState::kPausedMaintenance, JobState::kCompleted,
                                   JobState::kRevoked};
constexpr EvalSetting kSettings[] = {EvalSetting::kTaskSpecific, EvalSetting::kGeneralist};
constexpr RolloutPhase kPhases[] = {RolloutPhase::kIdle, RolloutPhase::kActive, RolloutPhase::kEnded};
constexpr GradeEventType kEventTypes[] = {GradeEventType::kStageComplete, GradeEventType::kRetry,
                                          GradeEventType::kFinalize};
constexpr TerminationReason kReasons[] = {
    TerminationReason::kStageScoreNegative, TerminationReason::kRetryLimit,
    TerminationReason::kManual, TerminationReason::kCompleted};

}  // namespace

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports the 1-based index of the offending character.
    const std::size_t pos = e.byte > 0 ? e.byte - 1 : 0;
    throw DecodeError(pos, "well-formed JSON", e.what());
  }
}

TerminationReason parse_termination_reason(std::string_view name) {
  auto r = lookup(name, kReasons);
  if (!r) throw ShapeError("", "termination reason");
  return *r;
}

JobState parse_job_state(std::string_view name) {
  auto r = lookup(name, kJobStates);
  if (!r) throw ShapeError("", "job state");
  return *r;
}

void to_json(Json& j, const RgbImage& v) {
  const auto png = encode_png(v);
  j = Json{{"width", v.width}, {"height", v.height}, {"png_b64", base64_encode(png)}};
}

void from_json(const Json& j, RgbImage& v) {
  const int width = field<int>(j, "width");
  const int height = field<int>(j, "height");
  const auto text = field<std::string>(j, "png_b64");
  try {
    v = decode_png(base64_decode(text));
  } catch (const DecodeError& e) {
    throw ShapeError("/png_b64", e.expected());
  }
  if (v.width != width || v.height != height) throw ShapeError("/png_b64", "png matching width/height");
}

void to_json(Json& j, const CameraSpec& v) {
  j = Json{{"camera_id", v.camera_id},
           {"role", to_string(v.role)},
           {"width", v.width},
           {"height", v.height},
           {"arm", v.arm}};
}

void from_json(const Json& j, CameraSpec& v) {
  v.camera_id = field<std::string>(j, "camera_id");
  v.role = parse_enum<CameraRole>(field<Json>(j, "role"), "camera role", parse_camera_role);
  v.width = field<int>(j, "width");
  v.height = field<int>(j, "height");
  v.arm = optional_field<int>(j, "arm").value_or(0);
}

void to_json(Json& j, const JointLimit& v) { j = Json::array({v.min, v.max}); }

void from_json(const Json& j, JointLimit& v) {
  if (!j.is_array() || j.size() != 2) throw ShapeError("", "[min, max] pair");
  v.min = j[0].get<double>();
  v.max = j[1].get<double>();
}

void to_json(Json& j, const RobotSpec& v) {
  j = Json{{"robot_id", v.robot_id},
           {"archetype", to_string(v.archetype)},
           {"arms", v.arms},
           {"dof_per_arm", v.dof_per_arm},
           {"joint_limits", v.joint_limits},
           {"max_control_rate_hz", v.max_control_rate_hz},
           {"cameras", v.cameras}};
}

void from_json(const Json& j, RobotSpec& v) {
  v.robot_id = field<std::string>(j, "robot_id");
  v.archetype = parse_enum<Archetype>(field<Json>(j, "archetype"), "archetype", parse_archetype);
  v.arms = field<int>(j, "arms");
  v.dof_per_arm = field<int>(j, "dof_per_arm");
  v.joint_limits = field<std::vector<JointLimit>>(j, "joint_limits");
  v.max_control_rate_hz = field<double>(j, "max_control_rate_hz");
  v.cameras = field<std::vector<CameraSpec>>(j, "cameras");
}

void to_json(Json& j, const Action& v) {
  j = Json{{"target_joints", v.target_joints},
           {"gripper_command", v.gripper_command},
           {"duration_ms", v.duration_ms}};
}

void from_json(const Json& j, Action& v) {
  v.target_joints = field<std::vector<double>>(j, "target_joints");
  v.gripper_command = field<std::vector<double>>(j, "gripper_command");
  v.duration_ms = field<std::int64_t>(j, "duration_ms");
}

void to_json(Json& j, const ActionChunk& v) {
  j = Json{{"client_seq", v.client_seq}, {"actions", v.actions}};
}

void from_json(const Json& j, ActionChunk& v) {
  v.client_seq = optional_field<std::int64_t>(j, "client_seq").value_or(0);
  v.actions = field<std::vector<Action>>(j, "actions");
}

void to_json(Json& j, const QueueState& v) {
  j = Json{{"length", v.length},
           {"executing", v.executing ? Json(*v.executing) : Json(nullptr)},
           {"executed_count", v.executed_count},
           {"estimated_drain_ms", v.estimated_drain_ms}};
}

void from_json(const Json& j, QueueState& v) {
  v.length = field<std::int64_t>(j, "length");
  v.executing = optional_field<std::int64_t>(j, "executing");
  v.executed_count = field<std::int64_t>(j, "executed_count");
  v.estimated_drain_ms = field<std::int64_t>(j, "estimated_drain_ms");
}

void to_json(Json& j, const Frame& v) {
  j = Json{{"camera_id", v.camera_id},
           {"rgb", v.rgb},
           {"timestamp_ns", v.timestamp_ns},
           {"depth", nullptr},
           {"depth_present", v.depth_present}};
}

void from_json(const Json& j, Frame& v) {
  v.camera_id = field<std::string>(j, "camera_id");
  v.rgb = field<RgbImage>(j, "rgb");
  v.timestamp_ns = field<Nanos>(j, "timestamp_ns");
  v.depth_present = optional_field<bool>(j, "depth_present").value_or(false);
}

void to_json(Json& j, const Proprioception& v) {
  j = Json{{"joint_positions", v.joint_positions},
           {"gripper_openness", v.gripper_openness},
           {"timestamp_ns", v.timestamp_ns}};
}

void from_json(const Json& j, Proprioception& v) {
  v.joint_positions = field<std::vector<double>>(j, "joint_positions");
  v.gripper_openness = field<std::vector<double>>(j, "gripper_openness");
  v.timestamp_ns = field<Nanos>(j, "timestamp_ns");
}

void to_json(Json& j, const ObservationBundle& v) {
  j = Json{{"capture_id", v.capture_id},
           {"frames", v.frames},
           {"proprio", v.proprio},
           {"queue_snapshot", v.queue_snapshot}};
}

void from_json(const Json& j, ObservationBundle& v) {
  v.capture_id = field<std::int64_t>(j, "capture_id");
  v.frames = field<std::vector<Frame>>(j, "frames");
  v.proprio = field<Proprioception>(j, "proprio");
  v.queue_snapshot = field<QueueState>(j, "queue_snapshot");
}

void to_json(Json& j, const CaptureRequest& v) {
  j = Json::object();
  j["camera_ids"] = v.camera_ids ? Json(*v.camera_ids) : Json(nullptr);
}

void from_json(const Json& j, CaptureRequest& v) {
  v.camera_ids = optional_field<std::vector<std::string>>(j, "camera_ids");
}

void to_json(Json& j, const EnqueueAck& v) {
  j = Json{{"action_ids", v.action_ids}, {"queue", v.queue}};
}

void from_json(const Json& j, EnqueueAck& v) {
  v.action_ids = field<std::vector<std::int64_t>>(j, "action_ids");
  v.queue = field<QueueState>(j, "queue");
}

void to_json(Json& j, const JobSubmission& v) {
  j = Json{{"task_set", v.task_set}, {"display_name", v.display_name}};
}

void from_json(const Json& j, JobSubmission& v) {
  v.task_set = field<std::vector<std::string>>(j, "task_set");
  v.display_name = field<std::string>(j, "display_name");
}

void to_json(Json& j, const TaskProgress& v) {
  j = Json{{"task_id", v.task_id}, {"completed", v.completed}, {"total", v.total}};
}

void from_json(const Json& j, TaskProgress& v) {
  v.task_id = field<std::string>(j, "task_id");
  v.completed = field<int>(j, "completed");
  v.total = field<int>(j, "total");
}

void to_json(Json& j, const RolloutInfo& v) {
  j = Json{{"rollout_id", v.rollout_id ? Json(*v.rollout_id) : Json(nullptr)},
           {"index", v.index},
           {"phase", to_string(v.phase)}};
}

void from_json(const Json& j, RolloutInfo& v) {
  v.rollout_id = optional_field<std::string>(j, "rollout_id");
  v.index = field<int>(j, "index");
  v.phase = parse_enum<RolloutPhase>(field<Json>(j, "phase"), "rollout phase",
                                     [](std::string_view s) { return lookup(s, kPhases); });
}

void to_json(Json& j, const JobStatus& v) {
  j = Json{{"job_id", v.job_id},
           {"status", to_string(v.status)},
           {"setting", to_string(v.setting)},
           {"task_set", v.task_set},
           {"approved", v.approved},
           {"robot_id", v.robot_id ? Json(*v.robot_id) : Json(nullptr)},
           {"expected_start_ns", v.expected_start_ns},
           {"current_task", v.current_task ? Json(*v.current_task) : Json(nullptr)},
           {"prompt", v.prompt ? Json(*v.prompt) : Json(nullptr)},
           {"progress", v.progress},
           {"rollout", v.rollout}};
  // Omitted entirely (not null) so blinded views carry no such key.
  if (v.display_name) j["display_name"] = *v.display_name;
}

void from_json(const Json& j, JobStatus& v) {
  v.job_id = field<std::string>(j, "job_id");
  v.status = parse_enum<JobState>(field<Json>(j, "status"), "job state",
                                  [](std::string_view s) { return lookup(s, kJobStates); });
  v.setting = parse_enum<EvalSetting>(field<Json>(j, "setting"), "setting",
                                      [](std::string_view s) { return lookup(s, kSettings); });
  v.display_name = optional_field<std::string>(j, "display_name");
  v.task_set = field<std::vector<std::string>>(j, "task_set");
  v.approved = field<bool>(j, "approved");
  v.robot_id = optional_field<std::string>(j, "robot_id");
  v.expected_start_ns = field<Nanos>(j, "expected_start_ns");
  v.current_task = optional_field<std::string>(j, "current_task");
  v.prompt = optional_field<std::string>(j, "prompt");
  v.progress = field<std::vector<TaskProgress>>(j, "progress");
  v.rollout = field<RolloutInfo>(j, "rollout");
}

void to_json(Json& j, const GradeEvent& v) {
  j = Json{{"type", to_string(v.type)}};
  if (v.stage) j["stage"] = *v.stage;
  if (v.reason) j["reason"] = to_string(*v.reason);
}

void from_json(const Json& j, GradeEvent& v) {
  v.type = parse_enum<GradeEventType>(field<Json>(j, "type"), "grade event type",
                                      [](std::string_view s) { return lookup(s, kEventTypes); });
  v.stage = optional_field<int>(j, "stage");
  v.reason.reset();
  if (auto r = optional_field<std::string>(j, "reason")) {
    auto parsed = lookup(*r, kReasons);
    if (!parsed) throw ShapeError("/reason", "termination reason");
    v.reason = *parsed;
  }
}

void to_json(Json& j, const RolloutResult& v) {
  j = Json{{"success", v.success},
           {"progress_score", v.progress_score},
           {"terminated_reason", to_string(v.terminated_reason)},
           {"duration_ms", v.duration_ms}};
}

void from_json(const Json& j, RolloutResult& v) {
  v.success = field<bool>(j, "success");
  v.progress_score = field<double>(j, "progress_score");
  v.terminated_reason = parse_enum<TerminationReason>(
      field<Json>(j, "terminated_reason"), "termination reason",
      [](std::string_view s) { return lookup(s, kReasons); });
  v.duration_ms = field<std::int64_t>(j, "duration_ms");
}

}  // namespace tb
