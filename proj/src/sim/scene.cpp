#include "tablebench/sim/scene.hpp"

#include <cmath>

namespace tb::sim {
namespace {

Json vec_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from(const Json& j) {
  const auto a = j.get<std::array<double, 3>>();
  return {a[0], a[1], a[2]};
}

Eigen::Vector3d vec_field(const Json& j, std::string_view key) {
  const auto a = field<std::array<double, 3>>(j, key);
  return {a[0], a[1], a[2]};
}

}  // namespace

std::string_view to_string(Shape shape) {
  switch (shape) {
    case Shape::kBox: return "box";
    case Shape::kCylinder: return "cylinder";
    case Shape::kSphere: return "sphere";
  }
  return "?";
}

std::optional<Shape> parse_shape(std::string_view name) {
  for (Shape s : {Shape::kBox, Shape::kCylinder, Shape::kSphere}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

bool SceneObject::covers(double x, double y) const {
  const double dx = x - position.x();
  const double dy = y - position.y();
  if (shape == Shape::kBox) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= size.x() / 2 && std::abs(ly) <= size.y() / 2;
  }
  const double r = size.x() / 2;
  return dx * dx + dy * dy <= r * r;
}

double SceneObject::extension() const {
  if (!slider) return 0.0;
  return (position - slider->origin).dot(slider->axis);
}

const SceneObject* SceneState::find(std::string_view id) const {
  for (const auto& o : objects) {
    if (o.object_id == id) return &o;
  }
  return nullptr;
}

SceneObject* SceneState::find(std::string_view id) {
  for (auto& o : objects) {
    if (o.object_id == id) return &o;
  }
  return nullptr;
}

int SceneState::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].object_id == id) return static_cast<int>(i);
  }
  return -1;
}

double support_height(const SceneState& scene, double x, double y, int skip) {
  double h = 0.0;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (static_cast<int>(i) == skip) continue;
    const auto& o = scene.objects[i];
    if (o.covers(x, y)) h = std::max(h, o.top());
  }
  return h;
}

std::vector<std::string> check_scene(const SceneState& scene) {
  std::vector<std::string> problems;
  for (const auto& o : scene.objects) {
    if (!o.position.allFinite() || !std::isfinite(o.yaw)) {
      problems.push_back("object " + o.object_id + " has a non-finite pose");
    } else if (!scene.table.contains(o.position.x(), o.position.y())) {
      problems.push_back("object " + o.object_id + " lies outside the table");
    }
  }
  return problems;
}

void to_json(Json& j, const SceneObject& v) {
  j = Json{{"object_id", v.object_id},
           {"shape", to_string(v.shape)},
           {"size", vec_json(v.size)},
           {"color", v.color},
           {"position", vec_json(v.position)},
           {"yaw", v.yaw},
           {"graspable", v.graspable}};
  if (v.slider) {
    j["slider"] = Json{{"axis", vec_json(v.slider->axis)},
                       {"origin", vec_json(v.slider->origin)},
                       {"travel", v.slider->travel}};
  }
}

void from_json(const Json& j, SceneObject& v) {
  v.object_id = field<std::string>(j, "object_id");
  const auto shape = parse_shape(field<std::string>(j, "shape"));
  if (!shape) throw ShapeError("/shape", "box, cylinder or sphere");
  v.shape = *shape;
  v.size = vec_field(j, "size");
  v.color = field<std::array<std::uint8_t, 3>>(j, "color");
  v.position = vec_field(j, "position");
  v.yaw = field<double>(j, "yaw");
  v.graspable = optional_field<bool>(j, "graspable").value_or(true);
  v.slider.reset();
  if (auto it = j.find("slider"); it != j.end() && !it->is_null()) {
    Slider s;
    s.axis = vec_from(it->at("axis"));
    s.origin = vec_from(it->at("origin"));
    s.travel = it->at("travel").get<double>();
    v.slider = s;
  }
}

void to_json(Json& j, const SceneState& v) {
  j = Json{{"task_id", v.task_id},
           {"objects", v.objects},
           {"table", {v.table.x_min, v.table.x_max, v.table.y_min, v.table.y_max}},
           {"rng_seed", v.rng_seed}};
}

void from_json(const Json& j, SceneState& v) {
  v.task_id = field<std::string>(j, "task_id");
  v.objects = field<std::vector<SceneObject>>(j, "objects");
  const auto t = field<std::array<double, 4>>(j, "table");
  v.table = {t[0], t[1], t[2], t[3]};
  v.rng_seed = optional_field<std::uint64_t>(j, "rng_seed").value_or(0);
}

}  // namespace tb::sim
