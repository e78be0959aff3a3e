#pragma once

#include <vector>

#include "tablebench/protocol/types.hpp"
#include "tablebench/sim/robot.hpp"
#include "tablebench/sim/task.hpp"

namespace tb::sim {

// Scripted waypoint player for the built-in tasks. It reads ground truth from
// the snapshot, so it exists to exercise the platform rather than to model a
// learned policy. Arm 0 does the work; other arms hold still.
std::vector<Action> oracle_plan(const TaskDescriptor& task, const SimSnapshot& snapshot);

// Moves arm 0's end effector to `target` in straight steps, then dwells to
// apply `gripper` if it differs. With `go_home` the arm returns to zero joints
// in one action instead.
struct CartesianMove {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double gripper = 1.0;
  bool go_home = false;
};

// Joint-space path for arm 0 through Cartesian waypoints, subdivided into
// steps of at most `max_step_m`.
std::vector<Action> plan_moves(Archetype archetype, const std::vector<double>& start_joints,
                               const std::vector<double>& start_gripper, const std::vector<CartesianMove>& moves,
                               double max_step_m = 0.02);

}  // namespace tb::sim
