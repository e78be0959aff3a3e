#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tablebench/sim/kinematics.hpp"
#include "tablebench/sim/scene.hpp"

namespace tb::sim {

struct SimConfig {
  // 0 selects the archetype's rate cap.
  double control_rate_hz = 0.0;
  // Standard deviation of the per-tick end-effector jitter, per axis.
  double noise_sigma_m = 0.0;
  double attach_distance_m = 0.01;
  std::uint64_t noise_seed = 0;
};

// Throws kInvalidArgument when the config breaks an invariant for `archetype`.
SimConfig resolve_config(Archetype archetype, SimConfig config);

// Immutable copy of everything a renderer or detector reads.
struct SimSnapshot {
  Archetype archetype = Archetype::kUr5;
  std::vector<double> joints;
  std::vector<double> gripper;
  SceneState scene;
  std::vector<Eigen::Vector3d> ee;
  std::vector<Eigen::Vector3d> home_ee;
  // Joint origins plus end effector for each arm.
  std::vector<std::vector<Eigen::Vector3d>> arm_points;
  // Object held by each arm.
  std::vector<std::optional<std::string>> held;
};

void to_json(Json& j, const SimSnapshot& v);

// Kinematic position-mode robot over a tabletop scene. Not thread-safe; the
// owner serializes access.
class SimRobot {
 public:
  SimRobot(Archetype archetype, SimConfig config);

  Archetype archetype() const { return archetype_; }
  const SimConfig& config() const { return config_; }
  const std::vector<KinematicChain>& chains() const { return chains_; }
  int total_dof() const;

  const std::vector<double>& joints() const { return joints_; }
  const std::vector<double>& gripper() const { return gripper_; }
  const SceneState& scene() const { return scene_; }
  Eigen::Vector3d ee_position(int arm) const;

  // Replaces the scene; releases anything held.
  void set_scene(SceneState scene);
  // Joints to zero, grippers open, held objects dropped.
  void home();
  // Drops held objects and opens the grippers without moving the arm.
  void release_all();
  // Restarts the jitter stream; replays reseed identically.
  void reseed_noise(std::uint64_t seed) { noise_rng_.seed(seed); }

  // Position-mode command for one control tick: joints track the target
  // exactly, plus the configured jitter. Held objects follow.
  void command_joints(std::span<const double> target);
  // Applies gripper fractions; closing near a graspable object attaches it,
  // opening releases it onto whatever lies beneath.
  void command_gripper(std::span<const double> command);

  SimSnapshot snapshot() const;

 private:
  struct Hold {
    int object = -1;
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  };

  std::span<const double> arm_joints(int arm) const;
  void update_held();
  void release(int arm);

  Archetype archetype_;
  SimConfig config_;
  std::vector<KinematicChain> chains_;
  std::vector<double> joints_;
  std::vector<double> gripper_;
  std::vector<std::optional<Hold>> holds_;
  SceneState scene_;
  std::mt19937_64 noise_rng_;
};

}  // namespace tb::sim
