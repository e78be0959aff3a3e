#include "tablebench/store/episode_store.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

#include "tablebench/protocol/error.hpp"
#include "tablebench/protocol/image.hpp"

namespace tb::store {

namespace {

constexpr std::string_view kImgseqMagic = "TBIMGSEQ1\n";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Json> read_lines(const fs::path& path) {
  std::vector<Json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

void write_binary(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kUnavailable, "cannot write " + path.string());
}

Json state_line(const EpisodeEvent& e) {
  Json j = e.data;
  j["t"] = e.t;
  return j;
}

}  // namespace

std::string_view to_string(EpisodeKind kind) {
  switch (kind) {
    case EpisodeKind::kDemonstration: return "demonstration";
    case EpisodeKind::kEvaluation: return "evaluation";
    case EpisodeKind::kReference: return "reference";
  }
  return "?";
}

EpisodeKind parse_episode_kind(std::string_view name) {
  if (name == "demonstration") return EpisodeKind::kDemonstration;
  if (name == "evaluation") return EpisodeKind::kEvaluation;
  if (name == "reference") return EpisodeKind::kReference;
  throw Error(ErrorCode::kInvalidArgument, "unknown episode kind '" + std::string(name) + "'");
}

void to_json(Json& j, const EpisodeMeta& v) {
  j = Json{{"episode_id", v.episode_id},
           {"task_id", v.task_id},
           {"robot_id", v.robot_id},
           {"kind", to_string(v.kind)},
           {"extra", v.extra}};
}

void from_json(const Json& j, EpisodeMeta& v) {
  v.episode_id = field<std::string>(j, "episode_id");
  v.task_id = field<std::string>(j, "task_id");
  v.robot_id = field<std::string>(j, "robot_id");
  v.kind = parse_episode_kind(field<std::string>(j, "kind"));
  v.extra = optional_field<Json>(j, "extra").value_or(Json::object());
}

void to_json(Json& j, const EpisodeEvent& v) { j = Json{{"t", v.t}, {"type", v.type}, {"data", v.data}}; }

void from_json(const Json& j, EpisodeEvent& v) {
  v.t = field<Nanos>(j, "t");
  v.type = field<std::string>(j, "type");
  v.data = optional_field<Json>(j, "data").value_or(Json::object());
}

void to_json(Json& j, const DatasetManifest& v) {
  Json eps = Json::array();
  for (const auto& e : v.episodes) {
    eps.push_back({{"episode_id", e.episode_id},
                   {"kind", to_string(e.kind)},
                   {"states", e.states_file},
                   {"videos", e.video_files},
                   {"ticks", e.ticks}});
  }
  j = Json{{"task_id", v.task_id},
           {"episodes", eps},
           {"counts", {{"exported", v.episodes.size()}, {"available", v.available}, {"omitted", v.omitted}}}};
  if (v.notice) j["notice"] = *v.notice;
}

void from_json(const Json& j, DatasetManifest& v) {
  v.task_id = field<std::string>(j, "task_id");
  v.episodes.clear();
  for (const auto& e : field<Json>(j, "episodes")) {
    ManifestEntry m;
    m.episode_id = field<std::string>(e, "episode_id");
    m.kind = parse_episode_kind(field<std::string>(e, "kind"));
    m.states_file = field<std::string>(e, "states");
    m.video_files = field<std::map<std::string, std::string>>(e, "videos");
    m.ticks = field<std::int64_t>(e, "ticks");
    v.episodes.push_back(std::move(m));
  }
  const auto counts = field<Json>(j, "counts");
  v.available = field<std::int64_t>(counts, "available");
  v.omitted = field<std::int64_t>(counts, "omitted");
  v.notice = optional_field<std::string>(j, "notice");
}

void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::kUnavailable, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kUnavailable, "cannot replace " + path.string() + ": " + ec.message());
}

void write_imgseq(const fs::path& path, const std::vector<std::pair<Nanos, RgbImage>>& frames) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(kImgseqMagic.data(), static_cast<std::streamsize>(kImgseqMagic.size()));
  for (const auto& [t, img] : frames) {
    const auto png = encode_png(img);
    std::uint8_t head[12];
    const auto ut = static_cast<std::uint64_t>(t);
    for (int i = 0; i < 8; ++i) head[i] = static_cast<std::uint8_t>(ut >> (8 * i));
    const auto n = static_cast<std::uint32_t>(png.size());
    for (int i = 0; i < 4; ++i) head[8 + i] = static_cast<std::uint8_t>(n >> (8 * i));
    out.write(reinterpret_cast<const char*>(head), 12);
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  }
  if (!out) throw Error(ErrorCode::kUnavailable, "cannot write " + path.string());
}

std::vector<std::pair<Nanos, RgbImage>> read_imgseq(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.compare(0, kImgseqMagic.size(), kImgseqMagic) != 0) {
    throw DecodeError(0, "image-sequence header", path.string());
  }
  std::vector<std::pair<Nanos, RgbImage>> out;
  std::size_t pos = kImgseqMagic.size();
  while (pos < bytes.size()) {
    if (pos + 12 > bytes.size()) throw DecodeError(pos, "frame header", "truncated container");
    std::uint64_t t = 0;
    std::uint32_t n = 0;
    for (int i = 0; i < 8; ++i) t |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
    for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + 8 + i])) << (8 * i);
    pos += 12;
    if (pos + n > bytes.size()) throw DecodeError(pos, "frame payload", "truncated container");
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + pos);
    out.emplace_back(static_cast<Nanos>(t), decode_png(std::span<const std::uint8_t>(p, n)));
    pos += n;
  }
  return out;
}

AppendLog::AppendLog(fs::path path) : path_(std::move(path)) {
  fs::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(ErrorCode::kUnavailable, "cannot open " + path_.string());
}

void AppendLog::append(const Json& line) {
  std::lock_guard lock(mu_);
  out_ << line.dump() << '\n';
  out_.flush();
}

std::vector<Json> AppendLog::read_all() const { return read_lines(path_); }

EpisodeWriter::EpisodeWriter(fs::path dir, EpisodeMeta meta) : dir_(std::move(dir)), meta_(std::move(meta)) {
  out_.open(dir_ / "events.jsonl", std::ios::app);
  if (!out_) throw Error(ErrorCode::kUnavailable, "cannot open log in " + dir_.string());
}

EpisodeWriter::~EpisodeWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void EpisodeWriter::record_event(const EpisodeEvent& event) {
  if (closed_) throw Error(ErrorCode::kConflict, "episode " + meta_.episode_id + " is closed");
  if (last_t_ && event.t <= *last_t_) {
    throw Error(ErrorCode::kInvalidArgument, "event time " + std::to_string(event.t) + " does not follow " +
                                                 std::to_string(*last_t_));
  }
  out_ << Json(event).dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::kUnavailable, "write failed for episode " + meta_.episode_id);
  last_t_ = event.t;
}

void EpisodeWriter::add_frame(const std::string& camera_id, Nanos t, const RgbImage& image) {
  if (closed_) throw Error(ErrorCode::kConflict, "episode " + meta_.episode_id + " is closed");
  const int n = frame_counts_[camera_id];
  const fs::path rel = fs::path("frames") / camera_id / (std::to_string(n) + ".png");
  fs::create_directories(dir_ / rel.parent_path());
  EpisodeEvent e{t, "frame", {{"camera_id", camera_id}, {"index", n}, {"file", rel.generic_string()}}};
  if (last_t_ && t <= *last_t_) {
    throw Error(ErrorCode::kInvalidArgument, "frame time does not follow the previous event");
  }
  write_binary(dir_ / rel, encode_png(image));
  record_event(e);
  ++frame_counts_[camera_id];
}

void EpisodeWriter::close() {
  if (closed_) return;
  record_event({last_t_.value_or(0) + 1, "close", Json::object()});
  closed_ = true;
  out_.close();
  std::error_code ec;
  fs::remove(dir_ / ".writer", ec);
}

EpisodeIndex::EpisodeIndex(std::vector<EpisodeEvent> events) : events_(std::move(events)) {
  for (std::size_t i = 1; i < events_.size(); ++i) {
    if (events_[i].t <= events_[i - 1].t) throw Error(ErrorCode::kInvalidArgument, "episode timestamps not increasing");
  }
}

const EpisodeEvent* EpisodeIndex::at_or_before(Nanos t) const {
  auto it = std::upper_bound(events_.begin(), events_.end(), t, [](Nanos v, const EpisodeEvent& e) { return v < e.t; });
  if (it == events_.begin()) return nullptr;
  return &*std::prev(it);
}

const EpisodeEvent* EpisodeIndex::after(Nanos t) const {
  auto it = std::upper_bound(events_.begin(), events_.end(), t, [](Nanos v, const EpisodeEvent& e) { return v < e.t; });
  if (it == events_.end()) return nullptr;
  return &*it;
}

EpisodeStore::EpisodeStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "episodes", ec);
  fs::create_directories(root_ / "holdout", ec);
  if (ec || !fs::is_directory(root_ / "episodes")) {
    throw Error(ErrorCode::kUnavailable, "cannot use store root " + root_.string());
  }
}

fs::path EpisodeStore::episode_dir(const std::string& episode_id) const {
  if (episode_id.empty() || episode_id.find_first_of("/\\") != std::string::npos || episode_id[0] == '.') {
    throw Error(ErrorCode::kInvalidArgument, "bad episode id '" + episode_id + "'");
  }
  return root_ / "episodes" / episode_id;
}

std::unique_ptr<EpisodeWriter> EpisodeStore::create_episode(const EpisodeMeta& meta) {
  if (meta.kind == EpisodeKind::kReference) {
    throw Error(ErrorCode::kInvalidArgument, "episodes become references only through selection");
  }
  const auto dir = episode_dir(meta.episode_id);
  std::error_code ec;
  if (!fs::create_directory(dir, ec)) {
    throw Error(ec ? ErrorCode::kUnavailable : ErrorCode::kConflict, "episode '" + meta.episode_id + "' exists");
  }
  std::FILE* lock = std::fopen((dir / ".writer").c_str(), "wx");
  if (!lock) throw Error(ErrorCode::kConflict, "episode '" + meta.episode_id + "' already has a writer");
  std::fclose(lock);
  write_atomic(dir / "meta.json", Json(meta).dump(2));
  return std::unique_ptr<EpisodeWriter>(new EpisodeWriter(dir, meta));
}

std::string EpisodeStore::next_episode_id(std::string_view prefix) const {
  int n = 1;
  for (const auto& id : episode_ids()) {
    if (id.rfind(prefix, 0) == 0) {
      try {
        n = std::max(n, std::stoi(id.substr(prefix.size())) + 1);
      } catch (const std::exception&) {
      }
    }
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", n);
  return std::string(prefix) + buf;
}

std::vector<std::string> EpisodeStore::episode_ids() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_ / "episodes")) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

EpisodeMeta EpisodeStore::meta(const std::string& episode_id) const {
  const auto dir = episode_dir(episode_id);
  if (!fs::exists(dir / "meta.json")) throw Error(ErrorCode::kNotFound, "unknown episode '" + episode_id + "'");
  return Json::parse(read_file(dir / "meta.json")).get<EpisodeMeta>();
}

bool EpisodeStore::is_closed(const std::string& episode_id) const {
  const auto path = episode_dir(episode_id) / "events.jsonl";
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) return false;
  const auto size = static_cast<std::int64_t>(in.tellg());
  const std::int64_t n = std::min<std::int64_t>(size, 256);
  std::string tail(static_cast<std::size_t>(n), '\0');
  in.seekg(size - n);
  in.read(tail.data(), n);
  while (!tail.empty() && tail.back() == '\n') tail.pop_back();
  const auto nl = tail.rfind('\n');
  const std::string last = nl == std::string::npos ? tail : tail.substr(nl + 1);
  if (nl == std::string::npos && size > n) return false;
  try {
    return Json::parse(last).at("type") == "close";
  } catch (const std::exception&) {
    return false;
  }
}

EpisodeKind EpisodeStore::effective_kind(const std::string& episode_id) const {
  const auto m = meta(episode_id);
  return references(m.task_id).count(episode_id) ? EpisodeKind::kReference : m.kind;
}

std::vector<EpisodeEvent> EpisodeStore::read_events(const std::string& episode_id) const {
  const auto dir = episode_dir(episode_id);
  if (!fs::exists(dir / "meta.json")) throw Error(ErrorCode::kNotFound, "unknown episode '" + episode_id + "'");
  std::vector<EpisodeEvent> out;
  for (const auto& line : read_lines(dir / "events.jsonl")) out.push_back(line.get<EpisodeEvent>());
  return out;
}

EpisodeIndex EpisodeStore::index(const std::string& episode_id) const { return EpisodeIndex(read_events(episode_id)); }

RgbImage EpisodeStore::read_frame(const std::string& episode_id, const std::string& camera_id, int index) const {
  const auto path = episode_dir(episode_id) / "frames" / camera_id / (std::to_string(index) + ".png");
  const std::string bytes = read_file(path);
  return decode_png(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

RgbImage EpisodeStore::initial_frame(const std::string& episode_id, const std::string& camera_id) const {
  for (const auto& e : read_events(episode_id)) {
    if (e.type == "frame" && e.data.at("camera_id") == camera_id) {
      return read_frame(episode_id, camera_id, e.data.at("index").get<int>());
    }
  }
  throw Error(ErrorCode::kNotFound, "episode '" + episode_id + "' has no " + camera_id + " frame");
}

std::set<std::string> EpisodeStore::references(const std::string& task_id) const {
  const auto path = root_ / "holdout" / (task_id + ".json");
  if (!fs::exists(path)) return {};
  return Json::parse(read_file(path)).at("references").get<std::set<std::string>>();
}

std::vector<std::string> EpisodeStore::closed_of_kind(const std::string& task_id, EpisodeKind kind) const {
  const auto refs = references(task_id);
  std::vector<std::string> out;
  for (const auto& id : episode_ids()) {
    const auto m = meta(id);
    if (m.task_id != task_id) continue;
    const EpisodeKind k = refs.count(id) ? EpisodeKind::kReference : m.kind;
    if (k == kind && is_closed(id)) out.push_back(id);
  }
  return out;
}

ReferenceSelection EpisodeStore::select_reference_frames(const std::string& task_id, std::size_t n,
                                                         std::uint64_t seed, const std::string& camera_id) {
  std::lock_guard lock(mu_);
  auto pool = closed_of_kind(task_id, EpisodeKind::kDemonstration);
  if (pool.size() < n) {
    throw Error(ErrorCode::kInvalidArgument, "task '" + task_id + "' has " + std::to_string(pool.size()) +
                                                 " demonstrations, fewer than " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng() % i]);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());

  auto refs = references(task_id);
  refs.insert(pool.begin(), pool.end());
  write_atomic(root_ / "holdout" / (task_id + ".json"),
               Json{{"task_id", task_id}, {"references", refs}}.dump(2));

  ReferenceSelection out;
  out.episode_ids = pool;
  for (const auto& id : pool) {
    const auto m = meta(id);
    out.frames.push_back({id, initial_frame(id, camera_id), m.extra.value("scene", Json())});
  }
  return out;
}

DatasetManifest EpisodeStore::export_dataset(const std::string& task_id, const fs::path& destination) const {
  std::vector<std::string> demos;
  {
    std::lock_guard lock(mu_);
    demos = closed_of_kind(task_id, EpisodeKind::kDemonstration);
  }
  if (demos.empty()) throw Error(ErrorCode::kNotFound, "task '" + task_id + "' has no closed demonstrations");
  std::error_code ec;
  fs::create_directories(destination, ec);
  if (ec || !fs::is_directory(destination)) {
    throw Error(ErrorCode::kUnavailable, "cannot write to " + destination.string());
  }

  DatasetManifest manifest;
  manifest.task_id = task_id;
  manifest.available = static_cast<std::int64_t>(demos.size());
  if (demos.size() > kMaxExportEpisodes) {
    manifest.omitted = static_cast<std::int64_t>(demos.size() - kMaxExportEpisodes);
    manifest.notice = std::to_string(demos.size()) + " demonstrations available; export is limited to " +
                      std::to_string(kMaxExportEpisodes) + " per task and " + std::to_string(manifest.omitted) +
                      " were left out";
    demos.resize(kMaxExportEpisodes);
  }

  for (const auto& id : demos) {
    ManifestEntry entry;
    entry.episode_id = id;
    entry.kind = EpisodeKind::kDemonstration;
    const fs::path dir = destination / id;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kUnavailable, "cannot write to " + dir.string());

    std::string states;
    std::map<std::string, std::vector<std::pair<Nanos, RgbImage>>> videos;
    for (const auto& e : read_events(id)) {
      if (e.type == "tick") {
        states += state_line(e).dump() + "\n";
        ++entry.ticks;
      } else if (e.type == "frame") {
        const auto cam = e.data.at("camera_id").get<std::string>();
        videos[cam].emplace_back(e.t, read_frame(id, cam, e.data.at("index").get<int>()));
      }
    }
    entry.states_file = id + "/states.jsonl";
    write_atomic(destination / entry.states_file, states);
    for (const auto& [cam, frames] : videos) {
      entry.video_files[cam] = id + "/" + cam + ".imgseq";
      write_imgseq(destination / entry.video_files[cam], frames);
    }
    manifest.episodes.push_back(std::move(entry));
  }
  write_atomic(destination / "manifest.json", Json(manifest).dump(2));
  return manifest;
}

ImportedDataset EpisodeStore::import_dataset(const fs::path& directory) {
  ImportedDataset out;
  out.manifest = Json::parse(read_file(directory / "manifest.json")).get<DatasetManifest>();
  for (const auto& entry : out.manifest.episodes) {
    auto& states = out.states[entry.episode_id];
    for (auto line : read_lines(directory / entry.states_file)) {
      const Nanos t = line.at("t").get<Nanos>();
      line.erase("t");
      states.push_back({t, "tick", std::move(line)});
    }
    for (const auto& [cam, file] : entry.video_files) {
      if (!fs::exists(directory / file)) throw Error(ErrorCode::kNotFound, "manifest names missing " + file);
    }
  }
  return out;
}

std::shared_ptr<AppendLog> EpisodeStore::log(const std::string& name) {
  std::lock_guard lock(mu_);
  auto& slot = logs_[name];
  if (!slot) slot = std::make_shared<AppendLog>(root_ / "logs" / (name + ".jsonl"));
  return slot;
}

}  // namespace tb::store
