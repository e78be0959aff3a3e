#include "tablebench/sim/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "tablebench/protocol/error.hpp"

namespace tb::sim {
namespace {

constexpr double kSpeed = 0.25;  // m/s along straight segments
constexpr std::int64_t kMinStepMs = 40;
constexpr std::int64_t kGripperDwellMs = 200;
constexpr double kHover = 0.10;

const SceneObject& need(const SimSnapshot& s, std::string_view id) {
  const auto* o = s.scene.find(id);
  if (!o) throw Error(ErrorCode::kInvalidArgument, "scene lacks object " + std::string(id));
  return *o;
}

// Pick `item` and set it down centered on `base`.
std::vector<CartesianMove> pick_and_place(const SceneObject& item, const SceneObject& base) {
  const Eigen::Vector3d up(0, 0, kHover);
  const Eigen::Vector3d place(base.position.x(), base.position.y(), base.top() + item.height() / 2 + 0.002);
  return {
      {item.position + up, 1.0}, {item.position, 0.0}, {item.position + up, 0.0},
      {place + up, 0.0},         {place, 1.0},         {place + up, 1.0},
  };
}

}  // namespace

std::vector<Action> plan_moves(Archetype archetype, const std::vector<double>& start_joints,
                               const std::vector<double>& start_gripper, const std::vector<CartesianMove>& moves,
                               double max_step_m) {
  const auto chains = chains_for(archetype);
  const auto& chain = chains.front();
  const auto dof = static_cast<std::size_t>(chain.dof());
  if (start_joints.size() != dof * chains.size()) throw Error(ErrorCode::kInvalidArgument, "start joints have wrong length");

  std::vector<double> joints = start_joints;
  std::vector<double> gripper = start_gripper;
  std::vector<Action> out;
  auto arm0 = [&] { return std::vector<double>(joints.begin(), joints.begin() + static_cast<std::ptrdiff_t>(dof)); };

  for (const auto& m : moves) {
    if (m.go_home) {
      std::fill(joints.begin(), joints.begin() + static_cast<std::ptrdiff_t>(dof), 0.0);
      gripper[0] = m.gripper;
      out.push_back({joints, gripper, 1500});
      continue;
    }
    const Eigen::Vector3d from = chain.fk_unchecked(arm0()).position;
    const double dist = (m.target - from).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(dist / max_step_m)));
    for (int i = 1; i <= steps; ++i) {
      const Eigen::Vector3d p = from + (m.target - from) * (static_cast<double>(i) / steps);
      const auto ik = solve_position_ik(chain, p, arm0());
      if (!ik.converged) {
        throw Error(ErrorCode::kInternal, "oracle cannot reach target (residual " + std::to_string(ik.error_m) + " m)");
      }
      std::copy(ik.q.begin(), ik.q.end(), joints.begin());
      const auto ms = std::max<std::int64_t>(kMinStepMs, std::llround(1000.0 * dist / steps / kSpeed));
      out.push_back({joints, gripper, ms});
    }
    if (m.gripper != gripper[0]) {
      gripper[0] = m.gripper;
      out.push_back({joints, gripper, kGripperDwellMs});
    }
  }
  return out;
}

std::vector<Action> oracle_plan(const TaskDescriptor& task, const SimSnapshot& s) {
  std::vector<CartesianMove> moves;
  if (task.task_id == "stack_color_blocks") {
    moves = pick_and_place(need(s, "red_block"), need(s, "blue_block"));
  } else if (task.task_id == "put_cup_on_coaster") {
    moves = pick_and_place(need(s, "cup"), need(s, "coaster"));
  } else if (task.task_id == "open_the_drawer") {
    const auto& h = need(s, "handle");
    if (!h.slider) throw Error(ErrorCode::kInvalidArgument, "handle is not on a slider");
    const Eigen::Vector3d axis = h.slider->axis;
    moves = {
        {h.position + 0.06 * axis, 1.0},
        {h.position, 0.0},
        {h.position + 0.12 * axis, 1.0},
        {Eigen::Vector3d::Zero(), 1.0, true},
    };
  } else {
    throw Error(ErrorCode::kNotFound, "no oracle policy for task " + task.task_id);
  }
  return plan_moves(s.archetype, s.joints, s.gripper, moves);
}

}  // namespace tb::sim
