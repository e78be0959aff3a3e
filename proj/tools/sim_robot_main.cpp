// sim-robot: a headless simulated robot behind the full platform (gateway,
// scheduler, grading, episode store) on one HTTP port.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "tablebench/server/http.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Headless simulated robot with the evaluation platform"};
  std::string archetype_name = "ur5";
  std::string robot_id;
  std::string task;
  std::uint64_t seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string port_file;
  std::string tasks_dir = TB_DEFAULT_TASKS_DIR;
  std::string store_dir = "tb-store";
  double accel = 1.0;
  double noise_mm = 0.0;
  double rate_hz = 0.0;
  bool sandbox = false;
  bool auto_approve = false;
  bool comparative = false;
  std::int64_t warm_up_ms = 300'000;
  std::int64_t home_ms = 0;
  std::string keys_file;
  std::string user_key;
  std::string tester_key;
  std::string results_csv;
  std::string tags_csv;

  app.add_option("--archetype", archetype_name, "ur5 | franka | aloha | arx5");
  app.add_option("--robot-id", robot_id, "Robot id (default <archetype>-1)");
  app.add_option("--task", task, "Task whose scene is loaded at start");
  app.add_option("--seed", seed, "Seed of the start scene");
  app.add_option("--host", host);
  app.add_option("--port", port, "0 picks a free port");
  app.add_option("--port-file", port_file, "Writes the bound port here");
  app.add_option("--tasks-dir", tasks_dir);
  app.add_option("--store", store_dir, "Episode store root");
  app.add_option("--accel", accel, "Sim speed relative to real time; 0 runs free");
  app.add_option("--noise-mm", noise_mm, "End-effector jitter sigma in mm");
  app.add_option("--rate-hz", rate_hz, "Control rate; 0 uses the archetype cap");
  app.add_flag("--sandbox", sandbox, "Accept actions without a scheduled rollout");
  app.add_flag("--auto-approve", auto_approve, "Approve submitted jobs onto this robot");
  app.add_flag("--comparative", comparative, "Enable blinded comparative sessions");
  app.add_option("--warm-up-ms", warm_up_ms, "Wall time between notify and start");
  app.add_option("--home-ms", home_ms, "Sim time the arm takes to drive home on reset");
  app.add_option("--keys", keys_file, "JSON keys file");
  app.add_option("--user-key", user_key, "Registers a user key");
  app.add_option("--tester-key", tester_key, "Registers a tester key");
  app.add_option("--results", results_csv, "Results table served by the analytics endpoints");
  app.add_option("--tags", tags_csv, "Task tag table");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto archetype = tb::parse_archetype(archetype_name);
    if (!archetype) throw tb::Error(tb::ErrorCode::kInvalidArgument, "unknown archetype '" + archetype_name + "'");
    tb::server::PlatformConfig cfg;
    tb::server::RobotSetup robot;
    robot.robot_id = robot_id.empty() ? archetype_name + "-1" : robot_id;
    robot.archetype = *archetype;
    robot.sim.noise_sigma_m = noise_mm / 1000.0;
    robot.sim.control_rate_hz = rate_hz;
    robot.sim.noise_seed = seed;
    if (!task.empty()) robot.idle_task = task;
    robot.idle_seed = seed;
    cfg.robots.push_back(robot);
    cfg.tasks_dir = tasks_dir;
    cfg.store_dir = store_dir;
    cfg.acceleration = accel;
    cfg.sandbox = sandbox;
    cfg.auto_approve = auto_approve;
    cfg.enable_comparative = comparative;
    cfg.warm_up = std::chrono::milliseconds(warm_up_ms);
    cfg.home_duration_ms = home_ms;
    if (!results_csv.empty()) cfg.results_csv = results_csv;
    if (!tags_csv.empty()) cfg.tags_csv = tags_csv;

    tb::server::KeyRegistry keys;
    if (!keys_file.empty()) keys.load_file(keys_file);
    if (!user_key.empty()) keys.add_key(user_key, tb::server::Role::kUser, "user");
    if (!tester_key.empty()) keys.add_key(tester_key, tb::server::Role::kTester, "tester");

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    tb::server::Platform platform(cfg);
    platform.start();
    tb::server::HttpServer http(platform, keys);
    const int bound = http.start(host, port);
    if (!port_file.empty()) std::ofstream(port_file) << bound << "\n";
    std::cout << "sim-robot " << robot.robot_id << " (" << archetype_name << ") listening on http://" << host << ":"
              << bound << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    http.stop();
    platform.stop();
  } catch (const std::exception& e) {
    std::cerr << "sim-robot: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
