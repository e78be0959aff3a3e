#pragma once

#include <string>
#include <vector>

#include "tablebench/protocol/types.hpp"

namespace tb {

enum class ViolationKind {
  kEmptyChunk,
  kDimensionMismatch,
  kGripperDimensionMismatch,
  kJointLimit,
  kGripperRange,
  kNonPositiveDuration,
  kNonFinite,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  // -1 for chunk-level violations.
  int action_index = -1;
  ViolationKind kind = ViolationKind::kEmptyChunk;
  std::string detail;
};

struct ChunkVerdict {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  std::string summary() const;
};

ChunkVerdict validate_chunk(const RobotSpec& spec, const ActionChunk& chunk);

}  // namespace tb
