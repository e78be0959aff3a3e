#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tablebench/protocol/json.hpp"
#include "tablebench/protocol/types.hpp"

namespace tb::store {

namespace fs = std::filesystem;

enum class EpisodeKind { kDemonstration, kEvaluation, kReference };

std::string_view to_string(EpisodeKind kind);
EpisodeKind parse_episode_kind(std::string_view name);

// Demonstrations exported per task, at most.
inline constexpr std::size_t kMaxExportEpisodes = 1000;

struct EpisodeMeta {
  std::string episode_id;
  std::string task_id;
  std::string robot_id;
  EpisodeKind kind = EpisodeKind::kDemonstration;
  // Free-form context: archetype, initial scene, seed, rollout id.
  Json extra = Json::object();

  bool operator==(const EpisodeMeta&) const = default;
};

void to_json(Json& j, const EpisodeMeta& v);
void from_json(const Json& j, EpisodeMeta& v);

// One line of an episode log. Types used by the recorder:
//   tick    {joints, gripper, executing, started, finished}
//   enqueue {action_ids, chunk, sim_ns}
//   frame   {camera_id, index, file}
//   capture {capture_id}
//   close   {}
struct EpisodeEvent {
  Nanos t = 0;
  std::string type;
  Json data = Json::object();

  bool operator==(const EpisodeEvent&) const = default;
};

void to_json(Json& j, const EpisodeEvent& v);
void from_json(const Json& j, EpisodeEvent& v);

// Append-only JSON-lines file.
class AppendLog {
 public:
  explicit AppendLog(fs::path path);
  void append(const Json& line);
  std::vector<Json> read_all() const;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

// Exclusive writer for one open episode.
class EpisodeWriter {
 public:
  ~EpisodeWriter();
  EpisodeWriter(const EpisodeWriter&) = delete;
  EpisodeWriter& operator=(const EpisodeWriter&) = delete;

  const EpisodeMeta& meta() const { return meta_; }
  // Timestamps must strictly increase.
  void record_event(const EpisodeEvent& event);
  // Writes the frame as PNG and records a frame event at `t`.
  void add_frame(const std::string& camera_id, Nanos t, const RgbImage& image);
  void close();
  bool closed() const { return closed_; }
  std::optional<Nanos> last_time() const { return last_t_; }

 private:
  friend class EpisodeStore;
  EpisodeWriter(fs::path dir, EpisodeMeta meta);

  fs::path dir_;
  EpisodeMeta meta_;
  std::ofstream out_;
  std::optional<Nanos> last_t_;
  std::map<std::string, int> frame_counts_;
  bool closed_ = false;
};

// Sorted view over an episode's events for timestamp lookups.
class EpisodeIndex {
 public:
  explicit EpisodeIndex(std::vector<EpisodeEvent> events);
  // Last event at or before t.
  const EpisodeEvent* at_or_before(Nanos t) const;
  // First event strictly after t.
  const EpisodeEvent* after(Nanos t) const;
  const std::vector<EpisodeEvent>& events() const { return events_; }

 private:
  std::vector<EpisodeEvent> events_;
};

struct ManifestEntry {
  std::string episode_id;
  EpisodeKind kind = EpisodeKind::kDemonstration;
  std::string states_file;
  std::map<std::string, std::string> video_files;
  std::int64_t ticks = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::string task_id;
  std::vector<ManifestEntry> episodes;
  std::int64_t available = 0;
  std::int64_t omitted = 0;
  std::optional<std::string> notice;

  bool operator==(const DatasetManifest&) const = default;
};

void to_json(Json& j, const DatasetManifest& v);
void from_json(const Json& j, DatasetManifest& v);

struct ImportedDataset {
  DatasetManifest manifest;
  // Tick records per episode, in file order.
  std::map<std::string, std::vector<EpisodeEvent>> states;
};

struct ReferenceFrame {
  std::string episode_id;
  RgbImage frame;
  Json initial_scene;
};

struct ReferenceSelection {
  std::vector<std::string> episode_ids;
  std::vector<ReferenceFrame> frames;
};

// Directory-backed episode store:
//   <root>/episodes/<id>/meta.json     written once at creation
//   <root>/episodes/<id>/events.jsonl  append-only log, closed by a close event
//   <root>/episodes/<id>/frames/<camera>/<n>.png
//   <root>/holdout/<task>.json         reference ids, replaced by atomic rename
//   <root>/logs/<name>.jsonl           platform logs (scheduler, grades)
class EpisodeStore {
 public:
  explicit EpisodeStore(fs::path root);

  const fs::path& root() const { return root_; }

  // Fails with kConflict when the id exists.
  std::unique_ptr<EpisodeWriter> create_episode(const EpisodeMeta& meta);
  std::string next_episode_id(std::string_view prefix) const;

  std::vector<std::string> episode_ids() const;
  EpisodeMeta meta(const std::string& episode_id) const;
  bool is_closed(const std::string& episode_id) const;
  // Stored kind, or reference once held out.
  EpisodeKind effective_kind(const std::string& episode_id) const;
  std::vector<EpisodeEvent> read_events(const std::string& episode_id) const;
  EpisodeIndex index(const std::string& episode_id) const;
  RgbImage read_frame(const std::string& episode_id, const std::string& camera_id, int index) const;
  // First frame of the camera in an episode.
  RgbImage initial_frame(const std::string& episode_id, const std::string& camera_id) const;

  std::set<std::string> references(const std::string& task_id) const;
  ReferenceSelection select_reference_frames(const std::string& task_id, std::size_t n, std::uint64_t seed,
                                             const std::string& camera_id = "main");

  DatasetManifest export_dataset(const std::string& task_id, const fs::path& destination) const;
  static ImportedDataset import_dataset(const fs::path& directory);

  std::shared_ptr<AppendLog> log(const std::string& name);

 private:
  fs::path episode_dir(const std::string& episode_id) const;
  std::vector<std::string> closed_of_kind(const std::string& task_id, EpisodeKind kind) const;

  fs::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<AppendLog>> logs_;
};

// Image-sequence video container: a magic line, then per frame an 8-byte
// little-endian timestamp, a 4-byte little-endian length and PNG bytes.
void write_imgseq(const fs::path& path, const std::vector<std::pair<Nanos, RgbImage>>& frames);
std::vector<std::pair<Nanos, RgbImage>> read_imgseq(const fs::path& path);

// Writes `text` to a temporary sibling and renames it over `path`.
void write_atomic(const fs::path& path, const std::string& text);

}  // namespace tb::store
