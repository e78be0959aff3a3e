#pragma once

#include <span>
#include <vector>

#include <Eigen/Geometry>

#include "tablebench/protocol/types.hpp"

namespace tb::sim {

// One revolute joint: rotate about `axis`, then translate along `link`, both in
// the joint's local frame.
struct JointDef {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d link = Eigen::Vector3d::Zero();
  JointLimit limit{-3.14159, 3.14159};
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

class KinematicChain {
 public:
  KinematicChain() = default;
  KinematicChain(Eigen::Isometry3d base, std::vector<JointDef> joints);

  int dof() const { return static_cast<int>(joints_.size()); }
  const std::vector<JointDef>& joints() const { return joints_; }
  const Eigen::Isometry3d& base() const { return base_; }

  // Throws kInvalidArgument on a wrong-length or out-of-limit vector.
  Pose fk(std::span<const double> q) const;
  // Same composition without the limit check.
  Pose fk_unchecked(std::span<const double> q) const;
  // Origin of every joint frame followed by the end effector (dof + 1 points).
  std::vector<Eigen::Vector3d> frame_origins(std::span<const double> q) const;
  // 3 x dof positional Jacobian.
  Eigen::MatrixXd position_jacobian(std::span<const double> q) const;

  bool within_limits(std::span<const double> q) const;
  Pose home() const;

 private:
  Eigen::Isometry3d base_ = Eigen::Isometry3d::Identity();
  std::vector<JointDef> joints_;
};

// Chains for each arm of an archetype, left arm first. Dimensions approximate
// the published robots and are not authoritative.
std::vector<KinematicChain> chains_for(Archetype archetype);

// Robot description with the default camera roster (256x192 frames).
RobotSpec default_robot_spec(Archetype archetype, std::string robot_id);

struct IkResult {
  std::vector<double> q;
  double error_m = 0.0;
  bool converged = false;
};

// Damped least-squares position IK seeded from `seed`, clamped to limits.
IkResult solve_position_ik(const KinematicChain& chain, const Eigen::Vector3d& target,
                           std::span<const double> seed, double tolerance_m = 1e-5,
                           int max_iterations = 500);

}  // namespace tb::sim
