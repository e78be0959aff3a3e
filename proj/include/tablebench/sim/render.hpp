#pragma once

#include <Eigen/Core>

#include "tablebench/protocol/types.hpp"
#include "tablebench/sim/robot.hpp"

namespace tb::sim {

// Orthographic view: `right` and `up` are unit image axes in world space; the
// camera looks along -(right x up).
struct OrthoCamera {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d right = Eigen::Vector3d::UnitX();
  Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  double px_per_m = 300.0;
  int width = 256;
  int height = 192;

  // Pixel coordinates (x right, y down) of a world point.
  Eigen::Vector2d project(const Eigen::Vector3d& p) const;
  // Distance toward the camera; larger is nearer.
  double depth(const Eigen::Vector3d& p) const;
};

// Extrinsics for a roster camera. Main looks straight down on the table, the
// wrist camera looks down centered on its arm's end effector, and the side
// camera looks horizontally across the table.
OrthoCamera camera_for(const CameraSpec& camera, const SimSnapshot& snapshot);

RgbImage render(const SimSnapshot& snapshot, const OrthoCamera& camera);
RgbImage render(const SimSnapshot& snapshot, const CameraSpec& camera);

}  // namespace tb::sim
