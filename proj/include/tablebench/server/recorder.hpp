#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "tablebench/gateway/gateway.hpp"
#include "tablebench/store/episode_store.hpp"

namespace tb::server {

// Writes one rollout's evaluation episode from gateway observations. Event
// times are sim nanoseconds, bumped by 1 ns where two events coincide; the
// tick and enqueue payloads carry the exact sim time.
class EpisodeRecorder {
 public:
  EpisodeRecorder(std::unique_ptr<store::EpisodeWriter> writer, std::string rollout_id, bool record_frames);

  const std::string& episode_id() const { return episode_id_; }
  const std::string& rollout_id() const { return rollout_id_; }

  void on_tick(const gateway::TickInfo& info);
  void on_enqueue(const gateway::EnqueueRecord& record);
  void on_capture(const ObservationBundle& bundle, Nanos sim_now);
  void note(Nanos t, const std::string& type, Json data);
  void close();
  bool closed() const;

 private:
  void record_locked(Nanos t, const std::string& type, Json data);

  mutable std::mutex mu_;
  std::unique_ptr<store::EpisodeWriter> writer_;
  std::string episode_id_;
  std::string rollout_id_;
  bool record_frames_;
};

struct ReplayReport {
  std::int64_t ticks = 0;
  std::int64_t mismatches = 0;
  std::optional<Nanos> first_mismatch;

  bool exact() const { return ticks > 0 && mismatches == 0; }
};

// Re-runs an evaluation episode against a fresh simulator: same scene, same
// noise seed, each recorded chunk enqueued at its recorded sim time. Compares
// joints and grippers tick by tick, bit for bit.
ReplayReport replay_episode(const store::EpisodeStore& store, const std::string& episode_id);

}  // namespace tb::server
