#include "tablebench/sim/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "tablebench/protocol/error.hpp"

namespace tb::sim {
namespace {

using Eigen::Vector3d;

JointDef joint(Vector3d axis, Vector3d link, double lo, double hi) {
  return JointDef{axis.normalized(), link, JointLimit{lo, hi}};
}

constexpr double kPi = 3.14159265358979323846;

// Yaw, shoulder, elbow, then a three-joint wrist. At zero the upper arm points
// up, the forearm forward and the wrist down.
std::vector<JointDef> six_dof(double base_h, double upper, double fore, double w1, double w2, double tool) {
  return {
      joint(Vector3d::UnitZ(), {0, 0, base_h}, -kPi, kPi),
      joint(Vector3d::UnitY(), {0, 0, upper}, -kPi, kPi),
      joint(Vector3d::UnitY(), {fore, 0, 0}, -2.8, 2.8),
      joint(Vector3d::UnitY(), {0, 0, -w1}, -kPi, kPi),
      joint(Vector3d::UnitX(), {0, 0, -w2}, -kPi, kPi),
      joint(Vector3d::UnitZ(), {0, 0, -tool}, -kPi, kPi),
  };
}

Eigen::Isometry3d base_at(double x, double y) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = Vector3d(x, y, 0);
  return t;
}

}  // namespace

KinematicChain::KinematicChain(Eigen::Isometry3d base, std::vector<JointDef> joints)
    : base_(base), joints_(std::move(joints)) {
  for (const auto& j : joints_) {
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "joint axis must be unit length");
    if (j.limit.min > j.limit.max) throw Error(ErrorCode::kInvalidArgument, "joint limit min > max");
  }
}

bool KinematicChain::within_limits(std::span<const double> q) const {
  if (q.size() != joints_.size()) return false;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!std::isfinite(q[i]) || q[i] < joints_[i].limit.min || q[i] > joints_[i].limit.max) return false;
  }
  return true;
}

Pose KinematicChain::fk(std::span<const double> q) const {
  if (q.size() != joints_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "expected " + std::to_string(joints_.size()) + " joint angles");
  }
  if (!within_limits(q)) throw Error(ErrorCode::kInvalidArgument, "joint angles outside limits");
  return fk_unchecked(q);
}

Pose KinematicChain::fk_unchecked(std::span<const double> q) const {
  Eigen::Isometry3d t = base_;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    t.rotate(Eigen::AngleAxisd(q[i], joints_[i].axis));
    t.translate(joints_[i].link);
  }
  return Pose{t.translation(), t.linear()};
}

std::vector<Eigen::Vector3d> KinematicChain::frame_origins(std::span<const double> q) const {
  std::vector<Vector3d> out;
  out.reserve(joints_.size() + 1);
  Eigen::Isometry3d t = base_;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    out.push_back(t.translation());
    t.rotate(Eigen::AngleAxisd(q[i], joints_[i].axis));
    t.translate(joints_[i].link);
  }
  out.push_back(t.translation());
  return out;
}

Eigen::MatrixXd KinematicChain::position_jacobian(std::span<const double> q) const {
  Eigen::MatrixXd jac(3, dof());
  std::vector<Vector3d> origins;
  std::vector<Vector3d> axes;
  Eigen::Isometry3d t = base_;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    origins.push_back(t.translation());
    axes.push_back(t.linear() * joints_[i].axis);
    t.rotate(Eigen::AngleAxisd(q[i], joints_[i].axis));
    t.translate(joints_[i].link);
  }
  const Vector3d ee = t.translation();
  for (int i = 0; i < dof(); ++i) jac.col(i) = axes[i].cross(ee - origins[i]);
  return jac;
}

Pose KinematicChain::home() const {
  const std::vector<double> zero(joints_.size(), 0.0);
  return fk(zero);
}

std::vector<KinematicChain> chains_for(Archetype archetype) {
  switch (archetype) {
    case Archetype::kUr5:
      return {KinematicChain(base_at(0, 0), six_dof(0.089, 0.425, 0.392, 0.095, 0.082, 0.10))};
    case Archetype::kArx5:
      return {KinematicChain(base_at(0, 0), six_dof(0.10, 0.30, 0.32, 0.06, 0.05, 0.08))};
    case Archetype::kAloha:
      return {KinematicChain(base_at(0, 0.2), six_dof(0.12, 0.30, 0.32, 0.07, 0.05, 0.07)),
              KinematicChain(base_at(0, -0.2), six_dof(0.12, 0.30, 0.32, 0.07, 0.05, 0.07))};
    case Archetype::kFranka:
      return {KinematicChain(base_at(0, 0),
                             {
                                 joint(Vector3d::UnitZ(), {0, 0, 0.333}, -2.9, 2.9),
                                 joint(Vector3d::UnitY(), {0, 0, 0.316}, -1.76, 1.76),
                                 joint(Vector3d::UnitZ(), {0, 0, 0}, -2.9, 2.9),
                                 joint(Vector3d::UnitY(), {0.384, 0, 0}, -3.07, 3.07),
                                 joint(Vector3d::UnitX(), {0.088, 0, 0}, -2.9, 2.9),
                                 joint(Vector3d::UnitY(), {0, 0, -0.107}, -3.75, 3.75),
                                 joint(Vector3d::UnitZ(), {0, 0, -0.10}, -2.9, 2.9),
                             })};
  }
  throw Error(ErrorCode::kInternal, "unknown archetype");
}

RobotSpec default_robot_spec(Archetype archetype, std::string robot_id) {
  const auto traits = traits_of(archetype);
  RobotSpec spec;
  spec.robot_id = std::move(robot_id);
  spec.archetype = archetype;
  spec.arms = traits.arms;
  spec.dof_per_arm = traits.dof_per_arm;
  spec.max_control_rate_hz = traits.rate_cap_hz;
  for (const auto& chain : chains_for(archetype)) {
    for (const auto& j : chain.joints()) spec.joint_limits.push_back(j.limit);
  }
  spec.cameras.push_back({"main", CameraRole::kMain, 256, 192, 0});
  if (traits.arms == 1) {
    spec.cameras.push_back({"wrist", CameraRole::kWrist, 256, 192, 0});
    spec.cameras.push_back({"side", CameraRole::kSide, 256, 192, 0});
  } else {
    spec.cameras.push_back({"wrist_left", CameraRole::kWrist, 256, 192, 0});
    spec.cameras.push_back({"wrist_right", CameraRole::kWrist, 256, 192, 1});
  }
  return spec;
}

IkResult solve_position_ik(const KinematicChain& chain, const Eigen::Vector3d& target,
                           std::span<const double> seed, double tolerance_m, int max_iterations) {
  if (seed.size() != static_cast<std::size_t>(chain.dof())) {
    throw Error(ErrorCode::kInvalidArgument, "IK seed has wrong length");
  }
  IkResult r;
  r.q.assign(seed.begin(), seed.end());
  const double lambda = 0.05;
  for (int it = 0; it < max_iterations; ++it) {
    const Vector3d err = target - chain.fk_unchecked(r.q).position;
    r.error_m = err.norm();
    if (r.error_m < tolerance_m) {
      r.converged = true;
      return r;
    }
    const Eigen::MatrixXd jac = chain.position_jacobian(r.q);
    const Eigen::Matrix3d jjt = jac * jac.transpose() + lambda * lambda * Eigen::Matrix3d::Identity();
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);
    const double step = dq.cwiseAbs().maxCoeff();
    if (step > 0.2) dq *= 0.2 / step;
    for (int i = 0; i < chain.dof(); ++i) {
      const auto& lim = chain.joints()[i].limit;
      r.q[i] = std::clamp(r.q[i] + dq[i], lim.min, lim.max);
    }
  }
  r.error_m = (target - chain.fk_unchecked(r.q).position).norm();
  r.converged = r.error_m < tolerance_m;
  return r;
}

}  // namespace tb::sim
