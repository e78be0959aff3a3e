#include "tablebench/protocol/validate.hpp"

#include <cmath>
#include <sstream>

namespace tb {

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyChunk: return "empty_chunk";
    case ViolationKind::kDimensionMismatch: return "dimension_mismatch";
    case ViolationKind::kGripperDimensionMismatch: return "gripper_dimension_mismatch";
    case ViolationKind::kJointLimit: return "joint_limit";
    case ViolationKind::kGripperRange: return "gripper_range";
    case ViolationKind::kNonPositiveDuration: return "non_positive_duration";
    case ViolationKind::kNonFinite: return "non_finite";
  }
  return "?";
}

std::string ChunkVerdict::summary() const {
  if (valid()) return "valid";
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const auto& v = violations[i];
    if (i) out << "; ";
    if (v.action_index >= 0) out << "action " << v.action_index << ": ";
    out << to_string(v.kind);
    if (!v.detail.empty()) out << " (" << v.detail << ")";
  }
  return out.str();
}

ChunkVerdict validate_chunk(const RobotSpec& spec, const ActionChunk& chunk) {
  ChunkVerdict verdict;
  auto add = [&](int index, ViolationKind kind, std::string detail) {
    verdict.violations.push_back({index, kind, std::move(detail)});
  };
  if (chunk.actions.empty()) add(-1, ViolationKind::kEmptyChunk, "");

  const std::size_t dof = static_cast<std::size_t>(spec.total_dof());
  const std::size_t arms = static_cast<std::size_t>(spec.arms);
  for (std::size_t i = 0; i < chunk.actions.size(); ++i) {
    const Action& a = chunk.actions[i];
    const int idx = static_cast<int>(i);
    if (a.target_joints.size() != dof) {
      add(idx, ViolationKind::kDimensionMismatch,
          "got " + std::to_string(a.target_joints.size()) + " joints, expected " + std::to_string(dof));
    } else {
      for (std::size_t j = 0; j < dof; ++j) {
        const double q = a.target_joints[j];
        if (!std::isfinite(q)) {
          add(idx, ViolationKind::kNonFinite, "joint " + std::to_string(j));
        } else if (j < spec.joint_limits.size() &&
                   (q < spec.joint_limits[j].min || q > spec.joint_limits[j].max)) {
          add(idx, ViolationKind::kJointLimit, "joint " + std::to_string(j));
        }
      }
    }
    if (a.gripper_command.size() != arms) {
      add(idx, ViolationKind::kGripperDimensionMismatch,
          "got " + std::to_string(a.gripper_command.size()) + " gripper commands, expected " +
              std::to_string(arms));
    } else {
      for (std::size_t g = 0; g < arms; ++g) {
        const double c = a.gripper_command[g];
        if (!std::isfinite(c)) {
          add(idx, ViolationKind::kNonFinite, "gripper " + std::to_string(g));
        } else if (c < 0.0 || c > 1.0) {
          add(idx, ViolationKind::kGripperRange, "gripper " + std::to_string(g));
        }
      }
    }
    if (a.duration_ms <= 0) add(idx, ViolationKind::kNonPositiveDuration, "");
  }
  return verdict;
}

}  // namespace tb
