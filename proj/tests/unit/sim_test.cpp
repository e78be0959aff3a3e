#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "support/sim_exec.hpp"
#include "tablebench/protocol/error.hpp"
#include "tablebench/sim/detect.hpp"
#include "tablebench/sim/kinematics.hpp"
#include "tablebench/sim/oracle.hpp"
#include "tablebench/sim/render.hpp"
#include "tablebench/sim/robot.hpp"
#include "tablebench/sim/task.hpp"

using namespace tb;
using namespace tb::sim;

namespace {

const TaskCatalog& catalog() {
  static const TaskCatalog c = TaskCatalog::load_dir(std::string(TB_SOURCE_DIR) + "/tasks");
  return c;
}

using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 identity4() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

Mat4 mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

// Rodrigues rotation about a unit axis, written out element by element.
Mat4 rot(const Eigen::Vector3d& k, double t) {
  const double c = std::cos(t), s = std::sin(t), v = 1 - c;
  const double x = k.x(), y = k.y(), z = k.z();
  Mat4 m = identity4();
  m[0] = {x * x * v + c, x * y * v - z * s, x * z * v + y * s, 0};
  m[1] = {x * y * v + z * s, y * y * v + c, y * z * v - x * s, 0};
  m[2] = {x * z * v - y * s, y * z * v + x * s, z * z * v + c, 0};
  return m;
}

Mat4 trans(const Eigen::Vector3d& d) {
  Mat4 m = identity4();
  m[0][3] = d.x();
  m[1][3] = d.y();
  m[2][3] = d.z();
  return m;
}

// Brute-force matrix-chain forward kinematics.
std::array<double, 3> oracle_fk(const KinematicChain& chain, const std::vector<double>& q) {
  Mat4 t = trans(chain.base().translation());
  for (std::size_t i = 0; i < q.size(); ++i) {
    t = mul(t, rot(chain.joints()[i].axis, q[i]));
    t = mul(t, trans(chain.joints()[i].link));
  }
  return {t[0][3], t[1][3], t[2][3]};
}

std::vector<double> random_q(const KinematicChain& chain, std::mt19937_64& rng) {
  std::vector<double> q;
  for (const auto& j : chain.joints()) q.push_back(std::uniform_real_distribution<double>(j.limit.min, j.limit.max)(rng));
  return q;
}

// Mean pixel position of every pixel with exactly `color`.
Eigen::Vector2d centroid(const RgbImage& img, std::array<std::uint8_t, 3> color, int* count = nullptr) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int n = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto* p = img.at(x, y);
      if (p[0] == color[0] && p[1] == color[1] && p[2] == color[2]) {
        sum += Eigen::Vector2d(x + 0.5, y + 0.5);
        ++n;
      }
    }
  }
  if (count) *count = n;
  return n ? Eigen::Vector2d(sum / n) : sum;
}

SimSnapshot stack_snapshot(double dx, double dz_gap) {
  SimRobot robot(Archetype::kUr5, {});
  SceneState scene = randomized_scene(catalog().get("stack_color_blocks"), 3);
  auto* red = scene.find("red_block");
  const auto* blue = scene.find("blue_block");
  red->position = blue->position + Eigen::Vector3d(dx, 0, blue->height() / 2 + red->height() / 2 + dz_gap);
  robot.set_scene(scene);
  return robot.snapshot();
}

}  // namespace

TEST_CASE("forward kinematics") {
  SUBCASE("zero angles give the documented home pose") {
    const auto ur5 = chains_for(Archetype::kUr5).front();
    const std::vector<double> zero(6, 0.0);
    const auto home = ur5.fk(zero).position;
    CHECK(home.x() == doctest::Approx(0.392).epsilon(1e-12));
    CHECK(home.y() == doctest::Approx(0.0));
    CHECK(home.z() == doctest::Approx(0.237).epsilon(1e-12));
    for (Archetype a : kAllArchetypes) {
      for (const auto& c : chains_for(a)) {
        CHECK(c.dof() == traits_of(a).dof_per_arm);
        const std::vector<double> z(static_cast<std::size_t>(c.dof()), 0.0);
        CHECK((c.fk(z).position - c.home().position).norm() == 0.0);
      }
    }
  }
  SUBCASE("single revolute joint") {
    KinematicChain chain(Eigen::Isometry3d::Identity(), {JointDef{Eigen::Vector3d::UnitZ(), {1, 0, 0}, {-4, 4}}});
    const std::vector<double> q{3.14159265358979323846 / 2};
    const auto p = chain.fk(q).position;
    CHECK(std::abs(p.x()) < 1e-9);
    CHECK(std::abs(p.y() - 1.0) < 1e-9);
    CHECK(std::abs(p.z()) < 1e-9);
  }
  SUBCASE("matches a brute-force matrix chain on 1000 configurations per archetype") {
    std::mt19937_64 rng(11);
    for (Archetype a : kAllArchetypes) {
      for (const auto& chain : chains_for(a)) {
        double worst = 0;
        for (int i = 0; i < 1000; ++i) {
          const auto q = random_q(chain, rng);
          const auto want = oracle_fk(chain, q);
          const auto got = chain.fk(q).position;
          for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(got[k] - want[static_cast<std::size_t>(k)]));
        }
        CHECK(worst < 1e-9);
      }
    }
  }
  SUBCASE("out-of-limit and wrong-length input") {
    const auto chain = chains_for(Archetype::kFranka).front();
    std::vector<double> q(7, 0.0);
    q[1] = 2.0;
    CHECK_THROWS_AS(chain.fk(q), Error);
    CHECK_THROWS_AS(chain.fk(std::vector<double>(6, 0.0)), Error);
  }
  SUBCASE("positional Jacobian agrees with finite differences") {
    std::mt19937_64 rng(5);
    const auto chain = chains_for(Archetype::kArx5).front();
    for (int trial = 0; trial < 50; ++trial) {
      auto q = random_q(chain, rng);
      const auto jac = chain.position_jacobian(q);
      for (int i = 0; i < chain.dof(); ++i) {
        auto qp = q, qm = q;
        qp[static_cast<std::size_t>(i)] += 1e-6;
        qm[static_cast<std::size_t>(i)] -= 1e-6;
        const Eigen::Vector3d fd = (chain.fk_unchecked(qp).position - chain.fk_unchecked(qm).position) / 2e-6;
        CHECK((fd - jac.col(i)).norm() < 1e-6);
      }
    }
  }
}

TEST_CASE("default robot specs satisfy their invariants") {
  for (Archetype a : kAllArchetypes) {
    const auto spec = default_robot_spec(a, "r1");
    CHECK(check_robot_spec(spec).empty());
  }
}

TEST_CASE("position IK reaches table targets") {
  for (Archetype a : kAllArchetypes) {
    const auto chain = chains_for(a).front();
    const std::vector<double> seed(static_cast<std::size_t>(chain.dof()), 0.0);
    for (double x : {0.3, 0.45}) {
      for (double y : {-0.12, 0.12}) {
        const auto r = solve_position_ik(chain, {x, y, 0.05}, seed);
        CHECK(r.converged);
        CHECK(chain.within_limits(r.q));
      }
    }
  }
}

TEST_CASE("config validation") {
  CHECK(resolve_config(Archetype::kUr5, {}).control_rate_hz == 125.0);
  CHECK(resolve_config(Archetype::kFranka, {}).control_rate_hz == 100.0);
  SimConfig fast;
  fast.control_rate_hz = 125.0;
  CHECK_THROWS_AS(resolve_config(Archetype::kArx5, fast), Error);
  SimConfig neg;
  neg.noise_sigma_m = -1;
  CHECK_THROWS_AS(resolve_config(Archetype::kUr5, neg), Error);
}

TEST_CASE("command semantics") {
  const auto& task = catalog().get("stack_color_blocks");

  SUBCASE("noise-free runs are bit-identical") {
    auto run = [&] {
      SimRobot robot(Archetype::kUr5, {});
      robot.set_scene(randomized_scene(task, 9));
      const auto plan = oracle_plan(task, robot.snapshot());
      testing::play_actions(robot, plan);
      return robot.snapshot();
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.joints == b.joints);
    CHECK(a.scene == b.scene);
    CHECK(render(a, default_robot_spec(Archetype::kUr5, "r").cameras[0]) ==
          render(b, default_robot_spec(Archetype::kUr5, "r").cameras[0]));
  }

  SUBCASE("closing 4 mm from an object attaches it under a 10 mm rule") {
    SimRobot robot(Archetype::kUr5, {});
    SceneState scene = randomized_scene(task, 1);
    const Eigen::Vector3d ee = robot.ee_position(0);
    scene.find("red_block")->position = ee + Eigen::Vector3d(0.004, 0, 0);
    robot.set_scene(scene);
    robot.command_gripper(std::vector<double>{0.0});
    CHECK(robot.snapshot().held[0] == std::optional<std::string>("red_block"));

    const auto chain = robot.chains().front();
    const auto ik = solve_position_ik(chain, ee + Eigen::Vector3d(0, 0.05, -0.05), robot.joints());
    REQUIRE(ik.converged);
    robot.command_joints(ik.q);
    const Eigen::Vector3d offset = robot.scene().find("red_block")->position - robot.ee_position(0);
    CHECK((offset - Eigen::Vector3d(0.004, 0, 0)).norm() < 1e-12);

    robot.command_gripper(std::vector<double>{1.0});
    CHECK_FALSE(robot.snapshot().held[0].has_value());
    CHECK(robot.scene().find("red_block")->bottom() == doctest::Approx(0.0));
  }

  SUBCASE("closing 15 mm away attaches nothing") {
    SimRobot robot(Archetype::kUr5, {});
    SceneState scene = randomized_scene(task, 1);
    scene.find("red_block")->position = robot.ee_position(0) + Eigen::Vector3d(0, 0.015, 0);
    robot.set_scene(scene);
    robot.command_gripper(std::vector<double>{0.0});
    CHECK_FALSE(robot.snapshot().held[0].has_value());
  }

  SUBCASE("held objects keep a constant offset every tick, even with jitter") {
    SimConfig cfg;
    cfg.noise_sigma_m = 0.001;
    cfg.noise_seed = 4;
    SimRobot robot(Archetype::kUr5, cfg);
    robot.set_scene(randomized_scene(task, 2));
    const auto plan = oracle_plan(task, robot.snapshot());
    std::optional<Eigen::Vector3d> offset;
    int held_ticks = 0;
    double worst = 0;
    testing::play_actions(robot, plan, [&](const SimRobot& r) {
      const auto s = r.snapshot();
      if (!s.held[0]) {
        offset.reset();
        return;
      }
      const Eigen::Vector3d now = s.scene.find(*s.held[0])->position - s.ee[0];
      if (offset) {
        worst = std::max(worst, (now - *offset).norm());
        ++held_ticks;
      }
      offset = now;
    });
    CHECK(held_ticks > 50);
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("repeatability with 0.5 mm jitter") {
  std::vector<Eigen::Vector3d> finals;
  for (int rep = 0; rep < 20; ++rep) {
    SimConfig cfg;
    cfg.noise_sigma_m = 0.0005;
    cfg.noise_seed = 1000 + static_cast<std::uint64_t>(rep);
    SimRobot robot(Archetype::kUr5, cfg);
    const auto plan = plan_moves(Archetype::kUr5, robot.joints(), robot.gripper(),
                                 {{Eigen::Vector3d(0.4, 0.1, 0.1), 1.0}, {Eigen::Vector3d(0.35, -0.05, 0.05), 1.0}});
    testing::play_actions(robot, plan);
    finals.push_back(robot.ee_position(0));
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : finals) mean += p;
  mean /= static_cast<double>(finals.size());
  double ss = 0;
  for (const auto& p : finals) ss += (p - mean).squaredNorm();
  const double rms = std::sqrt(ss / static_cast<double>(finals.size()));
  CHECK(rms > 0.0);
  CHECK(rms < 0.002);
}

TEST_CASE("rendering") {
  const auto spec = default_robot_spec(Archetype::kUr5, "r");
  const auto& task = catalog().get("stack_color_blocks");
  SimRobot robot(Archetype::kUr5, {});
  robot.set_scene(randomized_scene(task, 21));
  const auto snap = robot.snapshot();

  SUBCASE("deterministic") { CHECK(render(snap, spec.cameras[0]) == render(snap, spec.cameras[0])); }

  SUBCASE("an object moved 10 cm along x shifts by the projection scale") {
    auto moved = snap;
    moved.scene.find("blue_block")->position.x() += 0.10;
    const auto cam = camera_for(spec.cameras[0], snap);
    const auto color = snap.scene.find("blue_block")->color;
    int n0 = 0, n1 = 0;
    const auto c0 = centroid(render(snap, cam), color, &n0);
    const auto c1 = centroid(render(moved, cam), color, &n1);
    REQUIRE(n0 > 50);
    CHECK(n0 == n1);
    const Eigen::Vector2d expected = cam.project(moved.scene.find("blue_block")->position) -
                                     cam.project(snap.scene.find("blue_block")->position);
    CHECK(std::abs(expected.norm() - 0.10 * cam.px_per_m) < 1e-9);
    CHECK((c1 - c0 - expected).norm() < 0.5);
  }

  SUBCASE("distinct extrinsics give distinct images") {
    const auto main = render(snap, spec.cameras[0]);
    const auto wrist = render(snap, spec.cameras[1]);
    const auto side = render(snap, spec.cameras[2]);
    CHECK(main.width == 256);
    CHECK(main.height == 192);
    CHECK_FALSE(main == wrist);
    CHECK_FALSE(main == side);
  }
}

TEST_CASE("scene resets") {
  const auto& task = catalog().get("stack_color_blocks");
  SUBCASE("same seed, same scene") {
    CHECK(randomized_scene(task, 77) == randomized_scene(task, 77));
    CHECK_FALSE(randomized_scene(task, 77) == randomized_scene(task, 78));
    CHECK(check_scene(randomized_scene(task, 77)).empty());
  }
  SUBCASE("restoring a recorded scene reproduces its main-camera frame") {
    const auto spec = default_robot_spec(Archetype::kUr5, "r");
    SimRobot a(Archetype::kUr5, {});
    a.set_scene(randomized_scene(task, 5));
    const auto reference = render(a.snapshot(), spec.cameras[0]);
    const Json recorded = a.scene();
    SimRobot b(Archetype::kUr5, {});
    b.set_scene(randomized_scene(task, 6));
    b.set_scene(restored_scene(task, recorded.get<SceneState>()));
    CHECK(render(b.snapshot(), spec.cameras[0]) == reference);
  }
  SUBCASE("restoring a scene from another task fails") {
    const auto other = randomized_scene(catalog().get("put_cup_on_coaster"), 1);
    CHECK_THROWS_AS(restored_scene(task, other), Error);
  }
  SUBCASE("1000 resets sample x uniformly over the configured range") {
    const auto& tmpl = task.objects.front();
    const int bins = 10;
    std::vector<int> counts(bins, 0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const double x = randomized_scene(task, seed).objects.front().position.x();
      REQUIRE(x >= tmpl.x.lo);
      REQUIRE(x <= tmpl.x.hi);
      const int b = std::min(bins - 1, static_cast<int>((x - tmpl.x.lo) / (tmpl.x.hi - tmpl.x.lo) * bins));
      ++counts[static_cast<std::size_t>(b)];
    }
    double chi2 = 0;
    for (int c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
    // Chi-square critical value for 9 degrees of freedom at 0.01.
    CHECK(chi2 < 21.666);
  }
  SUBCASE("catalog errors") {
    CHECK_THROWS_AS(catalog().get("fold_towel"), Error);
    CHECK(catalog().ids().size() == 3);
  }
}

TEST_CASE("stage detectors") {
  SUBCASE("block exactly atop the other counts as stacked") {
    CHECK(detect_stage("stack_color_blocks", 1, stack_snapshot(0, 0)));
    CHECK(rests_on(stack_snapshot(0.009, 0.001), "red_block", "blue_block", 0.01));
  }
  SUBCASE("5 cm off to the side does not") {
    CHECK_FALSE(detect_stage("stack_color_blocks", 1, stack_snapshot(0.05, 0)));
    CHECK_FALSE(detect_stage("stack_color_blocks", 1, stack_snapshot(0, 0.01)));
  }
  SUBCASE("tasks without detectors need a human") {
    CHECK_FALSE(has_detectors("fold_towel"));
    CHECK_THROWS_AS(detect_stage("fold_towel", 0, stack_snapshot(0, 0)), Error);
    CHECK_THROWS_AS(detect_stage("stack_color_blocks", 3, stack_snapshot(0, 0)), Error);
  }
}

TEST_CASE("oracle rollouts trip every detector in rubric order") {
  for (const auto& id : catalog().ids()) {
    const auto& task = catalog().get(id);
    for (Archetype a : task.archetypes) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(id);
        CAPTURE(to_string(a));
        CAPTURE(seed);
        SimRobot robot(a, {});
        robot.set_scene(randomized_scene(task, seed));
        const auto plan = oracle_plan(task, robot.snapshot());
        int stage = 0;
        std::vector<int> fired;
        testing::play_actions(robot, plan, [&](const SimRobot& r) {
          const auto s = r.snapshot();
          while (stage < task.rubric.stage_count() && detect_stage(id, stage, s)) fired.push_back(stage++);
        });
        CHECK(stage == task.rubric.stage_count());
      }
    }
  }
}
