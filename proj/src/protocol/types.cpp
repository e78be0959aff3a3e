#include "tablebench/protocol/types.hpp"

#include <algorithm>
#include <set>

#include "tablebench/protocol/error.hpp"

namespace tb {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kUnauthorized: return "unauthorized";
    case ErrorCode::kForbidden: return "forbidden";
    case ErrorCode::kMaintenance: return "maintenance";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDecode: return "decode";
    case ErrorCode::kUnavailable: return "unavailable";
    case ErrorCode::kInternal: return "internal";
  }
  return "internal";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (auto code : {ErrorCode::kInvalidArgument, ErrorCode::kNotFound, ErrorCode::kConflict, ErrorCode::kUnauthorized,
                    ErrorCode::kForbidden, ErrorCode::kMaintenance, ErrorCode::kValidation, ErrorCode::kDecode,
                    ErrorCode::kUnavailable, ErrorCode::kInternal}) {
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return 400;
    case ErrorCode::kDecode: return 400;
    case ErrorCode::kUnauthorized: return 401;
    case ErrorCode::kForbidden: return 403;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kValidation: return 422;
    case ErrorCode::kMaintenance: return 503;
    case ErrorCode::kUnavailable: return 503;
    case ErrorCode::kInternal: return 500;
  }
  return 500;
}

ArchetypeTraits traits_of(Archetype archetype) {
  switch (archetype) {
    case Archetype::kUr5: return {1, 6, 125.0};
    case Archetype::kFranka: return {1, 7, 100.0};
    case Archetype::kAloha: return {2, 6, 100.0};
    case Archetype::kArx5: return {1, 6, 100.0};
  }
  throw Error(ErrorCode::kInternal, "unknown archetype");
}

std::string_view to_string(Archetype archetype) {
  switch (archetype) {
    case Archetype::kUr5: return "ur5";
    case Archetype::kFranka: return "franka";
    case Archetype::kAloha: return "aloha";
    case Archetype::kArx5: return "arx5";
  }
  return "?";
}

std::optional<Archetype> parse_archetype(std::string_view name) {
  for (Archetype a : kAllArchetypes) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

std::string_view to_string(CameraRole role) {
  switch (role) {
    case CameraRole::kMain: return "main";
    case CameraRole::kWrist: return "wrist";
    case CameraRole::kSide: return "side";
  }
  return "?";
}

std::optional<CameraRole> parse_camera_role(std::string_view name) {
  for (CameraRole r : {CameraRole::kMain, CameraRole::kWrist, CameraRole::kSide}) {
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::kQueued: return "queued";
    case JobState::kNotified: return "notified";
    case JobState::kRunning: return "running";
    case JobState::kPausedMaintenance: return "paused_maintenance";
    case JobState::kCompleted: return "completed";
    case JobState::kRevoked: return "revoked";
  }
  return "?";
}

std::string_view to_string(EvalSetting setting) {
  return setting == EvalSetting::kGeneralist ? "generalist" : "task_specific";
}

std::string_view to_string(RolloutPhase phase) {
  switch (phase) {
    case RolloutPhase::kIdle: return "idle";
    case RolloutPhase::kActive: return "active";
    case RolloutPhase::kEnded: return "ended";
  }
  return "?";
}

std::string_view to_string(GradeEventType type) {
  switch (type) {
    case GradeEventType::kStageComplete: return "stage_complete";
    case GradeEventType::kRetry: return "retry";
    case GradeEventType::kFinalize: return "finalize";
  }
  return "?";
}

std::string_view to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kStageScoreNegative: return "stage_score_negative";
    case TerminationReason::kRetryLimit: return "retry_limit";
    case TerminationReason::kManual: return "manual";
    case TerminationReason::kCompleted: return "completed";
  }
  return "?";
}

const CameraSpec* RobotSpec::find_camera(std::string_view camera_id) const {
  for (const auto& c : cameras) {
    if (c.camera_id == camera_id) return &c;
  }
  return nullptr;
}

std::vector<std::string> check_robot_spec(const RobotSpec& spec) {
  std::vector<std::string> problems;
  const ArchetypeTraits t = traits_of(spec.archetype);
  if (spec.arms < 1) problems.push_back("arms must be >= 1");
  if (spec.arms != t.arms) {
    problems.push_back("arms " + std::to_string(spec.arms) + " does not match archetype " +
                       std::string(to_string(spec.archetype)));
  }
  if (spec.dof_per_arm != t.dof_per_arm) {
    problems.push_back("dof_per_arm " + std::to_string(spec.dof_per_arm) +
                       " does not match archetype " + std::string(to_string(spec.archetype)));
  }
  if (static_cast<int>(spec.joint_limits.size()) != spec.arms * spec.dof_per_arm) {
    problems.push_back("joint_limits has " + std::to_string(spec.joint_limits.size()) +
                       " entries, expected " + std::to_string(spec.arms * spec.dof_per_arm));
  }
  for (const auto& lim : spec.joint_limits) {
    if (!(lim.min <= lim.max)) {
      problems.push_back("joint limit with min > max");
      break;
    }
  }
  if (!(spec.max_control_rate_hz > 0.0) || spec.max_control_rate_hz > t.rate_cap_hz) {
    problems.push_back("max_control_rate out of range for archetype");
  }

  int mains = 0;
  int sides = 0;
  std::vector<int> wrists(static_cast<std::size_t>(std::max(spec.arms, 0)), 0);
  std::set<std::string> ids;
  for (const auto& cam : spec.cameras) {
    if (!ids.insert(cam.camera_id).second) problems.push_back("duplicate camera id " + cam.camera_id);
    if (cam.width <= 0 || cam.height <= 0) {
      problems.push_back("camera " + cam.camera_id + " has non-positive dimensions");
    }
    switch (cam.role) {
      case CameraRole::kMain: ++mains; break;
      case CameraRole::kSide: ++sides; break;
      case CameraRole::kWrist:
        if (cam.arm < 0 || cam.arm >= spec.arms) {
          problems.push_back("wrist camera " + cam.camera_id + " mounted on missing arm");
        } else {
          ++wrists[static_cast<std::size_t>(cam.arm)];
        }
        break;
    }
  }
  if (mains != 1) problems.push_back("camera roster needs exactly one main camera");
  for (std::size_t arm = 0; arm < wrists.size(); ++arm) {
    if (wrists[arm] != 1) {
      problems.push_back("arm " + std::to_string(arm) + " needs exactly one wrist camera");
    }
  }
  if (sides > 0 && spec.arms != 1) problems.push_back("side camera only allowed on single-arm robots");
  if (sides > 1) problems.push_back("at most one side camera");
  return problems;
}

}  // namespace tb
