#include "tablebench/sim/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Geometry>

namespace tb::sim {
namespace {

using Color = std::array<std::uint8_t, 3>;
using Eigen::Vector2d;
using Eigen::Vector3d;

constexpr Color kBackground{40, 40, 48};
constexpr Color kTable{150, 120, 90};
constexpr Color kArm{90, 90, 100};
constexpr double kPi = 3.14159265358979323846;

struct Primitive {
  enum Kind { kPolygon, kSegment } kind = kPolygon;
  std::vector<Vector2d> points;  // hull for polygons, endpoints for segments
  double half_width = 0.0;
  Color color{};
  double depth = 0.0;
};

double cross(const Vector2d& o, const Vector2d& a, const Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; returns the hull counter-clockwise in pixel space.
std::vector<Vector2d> convex_hull(std::vector<Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vector2d& a, const Vector2d& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

std::vector<Vector3d> object_outline(const SceneObject& o, const OrthoCamera& cam) {
  std::vector<Vector3d> pts;
  const double hz = o.size.z() / 2;
  if (o.shape == Shape::kBox) {
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(o.yaw, Vector3d::UnitZ()).toRotationMatrix();
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        for (int sz : {-1, 1}) {
          pts.push_back(o.position + rot * Vector3d(sx * o.size.x() / 2, sy * o.size.y() / 2, sz * hz));
        }
      }
    }
  } else if (o.shape == Shape::kCylinder) {
    const double r = o.size.x() / 2;
    for (int i = 0; i < 24; ++i) {
      const double a = 2 * kPi * i / 24;
      for (double z : {-hz, hz}) pts.push_back(o.position + Vector3d(r * std::cos(a), r * std::sin(a), z));
    }
  } else {
    const double r = o.size.x() / 2;
    for (int i = 0; i < 24; ++i) {
      const double a = 2 * kPi * i / 24;
      pts.push_back(o.position + r * std::cos(a) * cam.right + r * std::sin(a) * cam.up);
    }
  }
  return pts;
}

Primitive polygon(const std::vector<Vector3d>& world, const OrthoCamera& cam, Color color, double depth) {
  Primitive p;
  p.kind = Primitive::kPolygon;
  std::vector<Vector2d> px;
  px.reserve(world.size());
  for (const auto& w : world) px.push_back(cam.project(w));
  p.points = convex_hull(std::move(px));
  p.color = color;
  p.depth = depth;
  return p;
}

bool inside(const std::vector<Vector2d>& hull, const Vector2d& q) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if (cross(hull[i], hull[(i + 1) % hull.size()], q) < 0) return false;
  }
  return true;
}

double segment_distance(const Vector2d& a, const Vector2d& b, const Vector2d& q) {
  const Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - q).norm();
}

void fill(RgbImage& img, const Primitive& p) {
  double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
  for (const auto& v : p.points) {
    x0 = std::min(x0, v.x() - p.half_width);
    y0 = std::min(y0, v.y() - p.half_width);
    x1 = std::max(x1, v.x() + p.half_width);
    y1 = std::max(y1, v.y() + p.half_width);
  }
  const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int px1 = std::min(img.width - 1, static_cast<int>(std::ceil(x1)));
  const int py1 = std::min(img.height - 1, static_cast<int>(std::ceil(y1)));
  for (int y = py0; y <= py1; ++y) {
    for (int x = px0; x <= px1; ++x) {
      const Vector2d q(x + 0.5, y + 0.5);
      const bool hit = p.kind == Primitive::kPolygon
                           ? inside(p.points, q)
                           : segment_distance(p.points[0], p.points[1], q) <= p.half_width;
      if (hit) std::copy(p.color.begin(), p.color.end(), img.at(x, y));
    }
  }
}

}  // namespace

Eigen::Vector2d OrthoCamera::project(const Eigen::Vector3d& p) const {
  const Vector3d d = p - center;
  return {width / 2.0 + d.dot(right) * px_per_m, height / 2.0 - d.dot(up) * px_per_m};
}

double OrthoCamera::depth(const Eigen::Vector3d& p) const { return (p - center).dot(right.cross(up)); }

OrthoCamera camera_for(const CameraSpec& camera, const SimSnapshot& snapshot) {
  OrthoCamera cam;
  cam.width = camera.width;
  cam.height = camera.height;
  const double scale = camera.width / 256.0;
  switch (camera.role) {
    case CameraRole::kMain:
      cam.center = {0.4, 0.0, 0.0};
      cam.right = -Vector3d::UnitY();
      cam.up = Vector3d::UnitX();
      cam.px_per_m = 300.0 * scale;
      break;
    case CameraRole::kWrist: {
      const auto arm = static_cast<std::size_t>(std::clamp(camera.arm, 0, static_cast<int>(snapshot.ee.size()) - 1));
      cam.center = snapshot.ee.empty() ? Vector3d::Zero() : snapshot.ee[arm];
      cam.right = -Vector3d::UnitY();
      cam.up = Vector3d::UnitX();
      cam.px_per_m = 900.0 * scale;
      break;
    }
    case CameraRole::kSide:
      cam.center = {0.4, 0.0, 0.2};
      cam.right = Vector3d::UnitX();
      cam.up = Vector3d::UnitZ();
      cam.px_per_m = 300.0 * scale;
      break;
  }
  return cam;
}

RgbImage render(const SimSnapshot& snapshot, const OrthoCamera& cam) {
  RgbImage img(cam.width, cam.height);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    std::copy(kBackground.begin(), kBackground.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(i));
  }

  const auto& t = snapshot.scene.table;
  std::vector<Vector3d> table;
  for (double x : {t.x_min, t.x_max}) {
    for (double y : {t.y_min, t.y_max}) {
      for (double z : {-0.02, 0.0}) table.emplace_back(x, y, z);
    }
  }
  fill(img, polygon(table, cam, kTable, 0.0));

  std::vector<Primitive> prims;
  for (const auto& o : snapshot.scene.objects) {
    prims.push_back(polygon(object_outline(o, cam), cam, o.color, cam.depth(o.position)));
  }
  const double link_half = std::max(1.0, 0.012 * cam.px_per_m);
  for (std::size_t arm = 0; arm < snapshot.arm_points.size(); ++arm) {
    const auto& pts = snapshot.arm_points[arm];
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      Primitive seg;
      seg.kind = Primitive::kSegment;
      seg.points = {cam.project(pts[i]), cam.project(pts[i + 1])};
      seg.half_width = link_half;
      seg.color = kArm;
      seg.depth = std::max(cam.depth(pts[i]), cam.depth(pts[i + 1]));
      prims.push_back(std::move(seg));
    }
    // Gripper marker: green open, red closed.
    const double g = arm < snapshot.gripper.size() ? snapshot.gripper[arm] : 1.0;
    const Vector3d ee = snapshot.ee[arm];
    const double h = 0.015;
    std::vector<Vector3d> marker;
    for (double a : {-h, h}) {
      for (double b : {-h, h}) marker.push_back(ee + a * cam.right + b * cam.up);
    }
    const Color c{static_cast<std::uint8_t>(std::lround(220 * (1 - g) + 60 * g)),
                  static_cast<std::uint8_t>(std::lround(60 * (1 - g) + 200 * g)), 60};
    prims.push_back(polygon(marker, cam, c, cam.depth(ee) + 1e-6));
  }
  std::stable_sort(prims.begin(), prims.end(),
                   [](const Primitive& a, const Primitive& b) { return a.depth < b.depth; });
  for (const auto& p : prims) fill(img, p);
  return img;
}

RgbImage render(const SimSnapshot& snapshot, const CameraSpec& camera) {
  return render(snapshot, camera_for(camera, snapshot));
}

}  // namespace tb::sim
