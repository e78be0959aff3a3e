#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tb {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kConflict,
  kUnauthorized,
  kForbidden,
  kMaintenance,
  kValidation,
  kDecode,
  kUnavailable,
  kInternal,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);
// HTTP status for an error response; the body names the code as well.
int http_status(ErrorCode code);

// Every library-level failure is reported as an Error carrying a code that the
// HTTP layer maps onto a status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DecodeError : public Error {
 public:
  // `path` is a JSON pointer for shape errors found after the text parsed.
  DecodeError(std::size_t position, std::string expected, const std::string& detail,
              std::string path = {})
      : Error(ErrorCode::kDecode, "decode failed at byte " + std::to_string(position) +
                                      (path.empty() ? "" : " (" + path + ")") + ": expected " +
                                      expected + " (" + detail + ")"),
        position_(position),
        expected_(std::move(expected)),
        path_(std::move(path)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& expected() const noexcept { return expected_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::size_t position_;
  std::string expected_;
  std::string path_;
};

}  // namespace tb
