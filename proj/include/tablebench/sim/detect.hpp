#pragma once

#include <string_view>

#include "tablebench/sim/robot.hpp"

namespace tb::sim {

// Geometric predicates shared by the built-in detectors.
bool is_held(const SimSnapshot& s, std::string_view object_id);
// `top`'s center lies within `xy_tolerance` horizontally of `bottom`'s and its
// base sits on `bottom`'s upper face (within 2 mm), and nothing holds it.
bool rests_on(const SimSnapshot& s, std::string_view top, std::string_view bottom, double xy_tolerance);

bool has_detectors(std::string_view task_id);
int detector_count(std::string_view task_id);

// Evaluates one rubric stage of a built-in task against a snapshot. Throws
// kNotFound when the task has no detectors (it needs a human grader) and
// kInvalidArgument for a stage index outside the rubric.
bool detect_stage(std::string_view task_id, int stage_index, const SimSnapshot& snapshot);

}  // namespace tb::sim
