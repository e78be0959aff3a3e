#pragma once

// nlohmann adapters for the wire types. Only translation units that build or
// parse HTTP bodies include this; everything else goes through codec.hpp.

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "tablebench/protocol/error.hpp"
#include "tablebench/protocol/types.hpp"

namespace tb {

using Json = nlohmann::json;

// Thrown by field accessors while walking a parsed document; the path grows as
// the error unwinds through nested from_json calls.
struct ShapeError : std::runtime_error {
  ShapeError(std::string p, std::string e)
      : std::runtime_error("expected " + e + " at " + p), path(std::move(p)), expected(std::move(e)) {}
  std::string path;
  std::string expected;
};

template <class T>
T field(const Json& j, std::string_view key) {
  if (!j.is_object()) throw ShapeError("", "object");
  auto it = j.find(key);
  if (it == j.end()) throw ShapeError("/" + std::string(key), "field '" + std::string(key) + "'");
  try {
    return it->template get<T>();
  } catch (ShapeError& e) {
    throw ShapeError("/" + std::string(key) + e.path, e.expected);
  } catch (const nlohmann::json::exception&) {
    throw ShapeError("/" + std::string(key), "field '" + std::string(key) + "' of matching type");
  }
}

template <class T>
std::optional<T> optional_field(const Json& j, std::string_view key) {
  if (!j.is_object()) throw ShapeError("", "object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return field<T>(j, key);
}

// Parses text, mapping syntax errors to DecodeError with the byte offset.
Json parse_json(std::string_view text);

template <class T>
T from_json_text(std::string_view text) {
  Json j = parse_json(text);
  try {
    return j.template get<T>();
  } catch (const ShapeError& e) {
    throw DecodeError(text.size(), e.expected, "document parsed but shape mismatched",
                      e.path.empty() ? "/" : e.path);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(text.size(), "message of matching type", e.what(), "/");
  }
}

void to_json(Json& j, const CameraSpec& v);
void from_json(const Json& j, CameraSpec& v);
void to_json(Json& j, const JointLimit& v);
void from_json(const Json& j, JointLimit& v);
void to_json(Json& j, const RobotSpec& v);
void from_json(const Json& j, RobotSpec& v);
void to_json(Json& j, const Action& v);
void from_json(const Json& j, Action& v);
void to_json(Json& j, const ActionChunk& v);
void from_json(const Json& j, ActionChunk& v);
void to_json(Json& j, const QueueState& v);
void from_json(const Json& j, QueueState& v);
void to_json(Json& j, const Frame& v);
void from_json(const Json& j, Frame& v);
void to_json(Json& j, const Proprioception& v);
void from_json(const Json& j, Proprioception& v);
void to_json(Json& j, const ObservationBundle& v);
void from_json(const Json& j, ObservationBundle& v);
void to_json(Json& j, const CaptureRequest& v);
void from_json(const Json& j, CaptureRequest& v);
void to_json(Json& j, const EnqueueAck& v);
void from_json(const Json& j, EnqueueAck& v);
void to_json(Json& j, const JobSubmission& v);
void from_json(const Json& j, JobSubmission& v);
void to_json(Json& j, const TaskProgress& v);
void from_json(const Json& j, TaskProgress& v);
void to_json(Json& j, const RolloutInfo& v);
void from_json(const Json& j, RolloutInfo& v);
void to_json(Json& j, const JobStatus& v);
void from_json(const Json& j, JobStatus& v);
void to_json(Json& j, const GradeEvent& v);
void from_json(const Json& j, GradeEvent& v);
void to_json(Json& j, const RolloutResult& v);
void from_json(const Json& j, RolloutResult& v);

void to_json(Json& j, const RgbImage& v);
void from_json(const Json& j, RgbImage& v);

// Enum helpers shared with modules that serialize their own views.
TerminationReason parse_termination_reason(std::string_view name);
JobState parse_job_state(std::string_view name);

}  // namespace tb
