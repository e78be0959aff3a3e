#include "tablebench/server/recorder.hpp"

#include <algorithm>

#include "tablebench/protocol/json.hpp"
#include "tablebench/sim/kinematics.hpp"

namespace tb::server {

EpisodeRecorder::EpisodeRecorder(std::unique_ptr<store::EpisodeWriter> writer, std::string rollout_id,
                                 bool record_frames)
    : writer_(std::move(writer)),
      episode_id_(writer_->meta().episode_id),
      rollout_id_(std::move(rollout_id)),
      record_frames_(record_frames) {}

void EpisodeRecorder::record_locked(Nanos t, const std::string& type, Json data) {
  if (!writer_ || writer_->closed()) return;
  const auto last = writer_->last_time();
  if (last && t <= *last) t = *last + 1;
  writer_->record_event({t, type, std::move(data)});
}

void EpisodeRecorder::on_tick(const gateway::TickInfo& info) {
  if (info.binding != rollout_id_ || !info.snapshot) return;
  std::lock_guard lock(mu_);
  record_locked(info.now, "tick",
                {{"now", info.now},
                 {"joints", info.snapshot->joints},
                 {"gripper", info.snapshot->gripper},
                 {"started", info.started},
                 {"finished", info.finished}});
}

void EpisodeRecorder::on_enqueue(const gateway::EnqueueRecord& record) {
  if (record.binding != rollout_id_) return;
  std::lock_guard lock(mu_);
  record_locked(record.at, "enqueue",
                {{"sim_ns", record.at}, {"action_ids", record.ack.action_ids}, {"chunk", record.chunk}});
}

void EpisodeRecorder::on_capture(const ObservationBundle& bundle, Nanos sim_now) {
  std::lock_guard lock(mu_);
  if (!writer_ || writer_->closed()) return;
  record_locked(sim_now, "capture",
                {{"capture_id", bundle.capture_id},
                 {"sim_ns", sim_now},
                 {"queue_length", bundle.queue_snapshot.length},
                 {"executing", bundle.queue_snapshot.executing ? Json(*bundle.queue_snapshot.executing) : Json(nullptr)}});
  if (!record_frames_) return;
  for (const auto& frame : bundle.frames) {
    if (frame.camera_id != "main") continue;
    const auto last = writer_->last_time();
    writer_->add_frame(frame.camera_id, last ? *last + 1 : sim_now, frame.rgb);
  }
}

void EpisodeRecorder::note(Nanos t, const std::string& type, Json data) {
  std::lock_guard lock(mu_);
  record_locked(t, type, std::move(data));
}

void EpisodeRecorder::close() {
  std::lock_guard lock(mu_);
  if (writer_ && !writer_->closed()) writer_->close();
}

bool EpisodeRecorder::closed() const {
  std::lock_guard lock(mu_);
  return !writer_ || writer_->closed();
}

ReplayReport replay_episode(const store::EpisodeStore& store, const std::string& episode_id) {
  const auto meta = store.meta(episode_id);
  const auto& x = meta.extra;
  const auto archetype = parse_archetype(x.at("archetype").get<std::string>());
  if (!archetype) throw Error(ErrorCode::kDecode, "episode " + episode_id + " has an unknown archetype");
  sim::SimConfig cfg;
  cfg.control_rate_hz = x.at("sim").at("control_rate_hz").get<double>();
  cfg.noise_sigma_m = x.at("sim").at("noise_sigma_m").get<double>();
  cfg.attach_distance_m = x.at("sim").at("attach_distance_m").get<double>();
  gateway::GatewayConfig gcfg;
  gcfg.home_duration_ms = x.value("home_duration_ms", std::int64_t{0});
  gateway::RobotGateway gw(sim::default_robot_spec(*archetype, meta.robot_id), sim::SimRobot(*archetype, cfg), gcfg);
  const Nanos t0 = x.at("sim_start_ns").get<Nanos>();
  const Nanos base = gw.begin_rollout(x.at("rollout_id").get<std::string>(),
                                      x.at("scene").get<sim::SceneState>(), x.at("seed").get<std::uint64_t>());

  std::vector<store::EpisodeEvent> ticks;
  std::vector<store::EpisodeEvent> enqueues;
  for (auto& e : store.read_events(episode_id)) {
    if (e.type == "tick") ticks.push_back(std::move(e));
    if (e.type == "enqueue") enqueues.push_back(std::move(e));
  }
  const auto sim_time = [](const store::EpisodeEvent& e, const char* key) { return e.data.at(key).get<Nanos>(); };
  std::stable_sort(enqueues.begin(), enqueues.end(),
                   [&](const auto& a, const auto& b) { return sim_time(a, "sim_ns") < sim_time(b, "sim_ns"); });

  ReplayReport report;
  std::size_t next_enqueue = 0;
  for (const auto& tick : ticks) {
    const Nanos now = sim_time(tick, "now");
    while (gw.now() - base < now - t0 - gw.tick_period_ns()) gw.tick();
    while (next_enqueue < enqueues.size() && sim_time(enqueues[next_enqueue], "sim_ns") < now) {
      gw.enqueue(enqueues[next_enqueue].data.at("chunk").get<ActionChunk>());
      ++next_enqueue;
    }
    gw.tick();
    const auto snap = gw.sim_snapshot();
    ++report.ticks;
    const bool same = gw.now() - base == now - t0 &&
                      snap.joints == tick.data.at("joints").get<std::vector<double>>() &&
                      snap.gripper == tick.data.at("gripper").get<std::vector<double>>();
    if (!same) {
      ++report.mismatches;
      if (!report.first_mismatch) report.first_mismatch = now;
    }
  }
  return report;
}

}  // namespace tb::server
