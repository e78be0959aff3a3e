// client: reference evaluation client. `run` submits a job and drives every
// rollout with a policy; `mock-test` checks a sandbox deployment end to end.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "tablebench/client/loop.hpp"

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation client"};
  app.require_subcommand(1);
  std::string endpoint = env_or("TB_ENDPOINT", "http://127.0.0.1:8080");
  std::string key = env_or("TB_API_KEY", "");

  auto* run = app.add_subcommand("run", "Submit a job and run its rollouts");
  std::string policy;
  std::string tasks_dir = TB_DEFAULT_TASKS_DIR;
  std::string display_name;
  std::string job_id;
  std::string transcripts_file;
  bool no_drain = false;
  int poll_ms = 20;
  int max_wait_s = 3600;
  run->add_option("--endpoint", endpoint);
  run->add_option("--key", key, "API key (default $TB_API_KEY)");
  run->add_option("--policy", policy, "oracle:<task_id>")->required();
  run->add_option("--tasks-dir", tasks_dir, "Task descriptors the oracle plans with");
  run->add_option("--display-name", display_name);
  run->add_option("--job-id", job_id, "Attach to an existing job instead of submitting");
  run->add_option("--transcripts", transcripts_file, "Writes rollout transcripts as JSON");
  run->add_flag("--no-drain", no_drain, "Capture without waiting for the queue to drain");
  run->add_option("--poll-ms", poll_ms);
  run->add_option("--max-wait-s", max_wait_s);

  auto* mock = app.add_subcommand("mock-test", "Exercise a sandbox deployment");
  std::string robot;
  std::string mock_task = "stack_color_blocks";
  mock->add_option("--endpoint", endpoint);
  mock->add_option("--key", key, "API key (default $TB_API_KEY)");
  mock->add_option("--robot", robot);
  mock->add_option("--task", mock_task);

  CLI11_PARSE(app, argc, argv);

  try {
    auto client = tb::client::Client::connect(endpoint, key);
    if (mock->parsed()) {
      const auto report = tb::client::mock_test(client, robot, mock_task);
      for (const auto& c : report.checks) {
        std::cout << std::left << std::setw(18) << c.name << std::setw(11) << c.subsystem << (c.ok ? "PASS " : "FAIL ")
                  << std::right << std::setw(4) << c.status << std::setw(10) << std::fixed << std::setprecision(2)
                  << c.latency_ms << " ms  " << c.detail << "\n";
      }
      std::cout << tb::Json(report).dump() << "\n";
      return report.ok() ? 0 : 1;
    }

    if (policy.rfind("oracle:", 0) != 0) {
      throw tb::Error(tb::ErrorCode::kInvalidArgument, "only oracle:<task_id> policies are built in");
    }
    const auto task = policy.substr(7);
    auto catalog = tb::sim::TaskCatalog::load_dir(tasks_dir);
    catalog.get(task);
    tb::client::OracleAdapter adapter(std::move(catalog), display_name.empty() ? "oracle-" + task : display_name);
    if (job_id.empty()) {
      job_id = client.submit_job({{task}, adapter.display_name()}).job_id;
      std::cerr << "submitted " << job_id << "\n";
    }
    tb::client::LoopConfig loop;
    loop.drain_before_capture = !no_drain;
    loop.poll_interval = std::chrono::milliseconds(poll_ms);
    loop.max_wait = std::chrono::seconds(max_wait_s);
    const auto report = tb::client::run_job(client, job_id, adapter, loop);
    if (!transcripts_file.empty()) std::ofstream(transcripts_file) << tb::Json(report.transcripts).dump(2) << "\n";
    for (const auto& t : report.results.at("tasks")) {
      std::cerr << t.at("task_id").get<std::string>() << ": success rate " << t.at("success_rate").dump()
                << "%, task score " << t.at("task_score").dump() << "\n";
    }
    std::cout << tb::Json{{"job_id", job_id},
                          {"status", to_string(report.final_status.status)},
                          {"rollouts", report.transcripts.size()},
                          {"results", report.results}}
                     .dump()
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "client: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
