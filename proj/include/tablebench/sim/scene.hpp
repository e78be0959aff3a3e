#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tablebench/protocol/json.hpp"

namespace tb::sim {

enum class Shape { kBox, kCylinder, kSphere };

std::string_view to_string(Shape shape);
std::optional<Shape> parse_shape(std::string_view name);

// Constrains an object to slide along a horizontal axis from `origin`.
struct Slider {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double travel = 0.0;

  bool operator==(const Slider&) const = default;
};

struct SceneObject {
  std::string object_id;
  Shape shape = Shape::kBox;
  // Box: extents along local x, y, z. Cylinder: diameter, diameter, height.
  // Sphere: diameter in every slot.
  Eigen::Vector3d size = Eigen::Vector3d::Constant(0.05);
  std::array<std::uint8_t, 3> color{200, 200, 200};
  // Center of the object.
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  bool graspable = true;
  std::optional<Slider> slider;

  double height() const { return size.z(); }
  double top() const { return position.z() + size.z() / 2; }
  double bottom() const { return position.z() - size.z() / 2; }
  // True when the horizontal point lies over the object's footprint.
  bool covers(double x, double y) const;
  // Slider displacement from its origin along the axis (0 for free objects).
  double extension() const;

  bool operator==(const SceneObject&) const = default;
};

struct TableBounds {
  double x_min = 0.1;
  double x_max = 0.8;
  double y_min = -0.4;
  double y_max = 0.4;

  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  bool operator==(const TableBounds&) const = default;
};

struct SceneState {
  std::string task_id;
  std::vector<SceneObject> objects;
  TableBounds table;
  std::uint64_t rng_seed = 0;

  const SceneObject* find(std::string_view id) const;
  SceneObject* find(std::string_view id);
  int index_of(std::string_view id) const;

  bool operator==(const SceneState&) const = default;
};

// Height of the highest surface under (x, y), ignoring object `skip`.
double support_height(const SceneState& scene, double x, double y, int skip);

// Lists violated invariants: positions finite and inside the table.
std::vector<std::string> check_scene(const SceneState& scene);

void to_json(Json& j, const SceneObject& v);
void from_json(const Json& j, SceneObject& v);
void to_json(Json& j, const SceneState& v);
void from_json(const Json& j, SceneState& v);

}  // namespace tb::sim
