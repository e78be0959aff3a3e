#include "tablebench/sim/robot.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "tablebench/protocol/error.hpp"

namespace tb::sim {

SimConfig resolve_config(Archetype archetype, SimConfig config) {
  const double cap = traits_of(archetype).rate_cap_hz;
  if (config.control_rate_hz == 0.0) config.control_rate_hz = cap;
  if (!(config.control_rate_hz > 0.0) || config.control_rate_hz > cap) {
    throw Error(ErrorCode::kInvalidArgument, "control rate must lie in (0, " + std::to_string(cap) + "] Hz");
  }
  if (!(config.noise_sigma_m >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  if (!(config.attach_distance_m >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "attach distance must be >= 0");
  return config;
}

SimRobot::SimRobot(Archetype archetype, SimConfig config)
    : archetype_(archetype),
      config_(resolve_config(archetype, config)),
      chains_(chains_for(archetype)),
      joints_(static_cast<std::size_t>(traits_of(archetype).arms * traits_of(archetype).dof_per_arm), 0.0),
      gripper_(chains_.size(), 1.0),
      holds_(chains_.size()),
      noise_rng_(config.noise_seed) {}

int SimRobot::total_dof() const { return static_cast<int>(joints_.size()); }

std::span<const double> SimRobot::arm_joints(int arm) const {
  const auto dof = static_cast<std::size_t>(chains_[static_cast<std::size_t>(arm)].dof());
  return std::span<const double>(joints_).subspan(static_cast<std::size_t>(arm) * dof, dof);
}

Eigen::Vector3d SimRobot::ee_position(int arm) const {
  return chains_[static_cast<std::size_t>(arm)].fk_unchecked(arm_joints(arm)).position;
}

void SimRobot::set_scene(SceneState scene) {
  std::fill(holds_.begin(), holds_.end(), std::nullopt);
  scene_ = std::move(scene);
}

void SimRobot::home() {
  release_all();
  std::fill(joints_.begin(), joints_.end(), 0.0);
}

void SimRobot::release_all() {
  for (int arm = 0; arm < static_cast<int>(chains_.size()); ++arm) release(arm);
  std::fill(gripper_.begin(), gripper_.end(), 1.0);
}

void SimRobot::command_joints(std::span<const double> target) {
  if (target.size() != joints_.size()) throw Error(ErrorCode::kInvalidArgument, "joint target has wrong length");
  std::copy(target.begin(), target.end(), joints_.begin());
  if (config_.noise_sigma_m > 0.0) {
    std::normal_distribution<double> gauss(0.0, config_.noise_sigma_m);
    std::size_t base = 0;
    for (const auto& chain : chains_) {
      const auto dof = static_cast<std::size_t>(chain.dof());
      auto q = std::span<double>(joints_).subspan(base, dof);
      const Eigen::Vector3d e(gauss(noise_rng_), gauss(noise_rng_), gauss(noise_rng_));
      const Eigen::MatrixXd jac = chain.position_jacobian(q);
      const Eigen::Matrix3d jjt = jac * jac.transpose() + 1e-9 * Eigen::Matrix3d::Identity();
      const Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(e);
      for (std::size_t i = 0; i < dof; ++i) {
        const auto& lim = chain.joints()[i].limit;
        q[i] = std::clamp(q[i] + dq[static_cast<Eigen::Index>(i)], lim.min, lim.max);
      }
      base += dof;
    }
  }
  update_held();
}

void SimRobot::command_gripper(std::span<const double> command) {
  if (command.size() != gripper_.size()) throw Error(ErrorCode::kInvalidArgument, "gripper command has wrong length");
  for (int arm = 0; arm < static_cast<int>(gripper_.size()); ++arm) {
    const double before = gripper_[static_cast<std::size_t>(arm)];
    const double after = std::clamp(command[static_cast<std::size_t>(arm)], 0.0, 1.0);
    gripper_[static_cast<std::size_t>(arm)] = after;
    auto& hold = holds_[static_cast<std::size_t>(arm)];
    if (after >= 0.5 && hold) {
      release(arm);
    } else if (after < 0.5 && before >= 0.5 && !hold) {
      const Eigen::Vector3d ee = ee_position(arm);
      int best = -1;
      double best_d = config_.attach_distance_m;
      for (std::size_t i = 0; i < scene_.objects.size(); ++i) {
        const auto& o = scene_.objects[i];
        if (!o.graspable) continue;
        const bool taken = std::any_of(holds_.begin(), holds_.end(),
                                       [&](const auto& h) { return h && h->object == static_cast<int>(i); });
        if (taken) continue;
        const double d = (o.position - ee).norm();
        if (d <= best_d) {
          best = static_cast<int>(i);
          best_d = d;
        }
      }
      if (best >= 0) hold = Hold{best, scene_.objects[static_cast<std::size_t>(best)].position - ee};
    }
  }
}

void SimRobot::update_held() {
  for (int arm = 0; arm < static_cast<int>(holds_.size()); ++arm) {
    const auto& hold = holds_[static_cast<std::size_t>(arm)];
    if (!hold) continue;
    auto& o = scene_.objects[static_cast<std::size_t>(hold->object)];
    const Eigen::Vector3d want = ee_position(arm) + hold->offset;
    if (o.slider) {
      const double along = std::clamp((want - o.slider->origin).dot(o.slider->axis), 0.0, o.slider->travel);
      o.position = o.slider->origin + along * o.slider->axis;
    } else {
      o.position = want;
    }
  }
}

void SimRobot::release(int arm) {
  auto& hold = holds_[static_cast<std::size_t>(arm)];
  if (!hold) return;
  auto& o = scene_.objects[static_cast<std::size_t>(hold->object)];
  if (!o.slider) {
    const double h = support_height(scene_, o.position.x(), o.position.y(), hold->object);
    o.position.z() = h + o.height() / 2;
  }
  hold.reset();
}

SimSnapshot SimRobot::snapshot() const {
  SimSnapshot s;
  s.archetype = archetype_;
  s.joints = joints_;
  s.gripper = gripper_;
  s.scene = scene_;
  for (int arm = 0; arm < static_cast<int>(chains_.size()); ++arm) {
    const auto& chain = chains_[static_cast<std::size_t>(arm)];
    s.ee.push_back(ee_position(arm));
    s.home_ee.push_back(chain.home().position);
    s.arm_points.push_back(chain.frame_origins(arm_joints(arm)));
    const auto& hold = holds_[static_cast<std::size_t>(arm)];
    s.held.push_back(hold ? std::optional<std::string>(scene_.objects[static_cast<std::size_t>(hold->object)].object_id)
                          : std::nullopt);
  }
  return s;
}

void to_json(Json& j, const SimSnapshot& v) {
  Json ee = Json::array();
  for (const auto& p : v.ee) ee.push_back({p.x(), p.y(), p.z()});
  Json held = Json::array();
  for (const auto& h : v.held) held.push_back(h ? Json(*h) : Json(nullptr));
  j = Json{{"archetype", to_string(v.archetype)},
           {"joints", v.joints},
           {"gripper", v.gripper},
           {"ee", ee},
           {"held", held},
           {"scene", v.scene}};
}

}  // namespace tb::sim
