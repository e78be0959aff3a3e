#pragma once

#include <array>
#include <string_view>

namespace tb {

struct RouteSpec {
  std::string_view method;
  // `{id}` matches one path segment.
  std::string_view pattern;
  bool tester_only;
};

// The complete HTTP surface. docs/http_api.md describes each route.
inline constexpr std::array<RouteSpec, 33> kRoutes = {{
    {"GET", "/api/v1/health", false},
    {"GET", "/api/v1/robots", false},
    {"GET", "/api/v1/robots/{id}", false},
    {"POST", "/api/v1/robots/{id}/capture", false},
    {"POST", "/api/v1/robots/{id}/actions", false},
    {"GET", "/api/v1/robots/{id}/queue", false},
    {"GET", "/api/v1/robots/{id}/sim_state", false},
    {"POST", "/api/v1/robots/{id}/reset", true},
    {"GET", "/api/v1/robots/{id}/overlay", true},
    {"POST", "/api/v1/robots/{id}/fault", true},
    {"POST", "/api/v1/robots/{id}/resume", true},
    {"GET", "/api/v1/tasks", false},
    {"GET", "/api/v1/tasks/{id}", false},
    {"GET", "/api/v1/tasks/{id}/references", true},
    {"POST", "/api/v1/jobs", false},
    {"GET", "/api/v1/jobs", false},
    {"GET", "/api/v1/jobs/{id}", false},
    {"GET", "/api/v1/jobs/{id}/results", false},
    {"POST", "/api/v1/jobs/{id}/approve", true},
    {"POST", "/api/v1/jobs/{id}/revoke", false},
    {"POST", "/api/v1/sessions", true},
    {"GET", "/api/v1/sessions/{id}", true},
    {"POST", "/api/v1/sessions/{id}/assign", true},
    {"POST", "/api/v1/sessions/{id}/finalize", true},
    {"POST", "/api/v1/rollouts/{id}/events", true},
    {"GET", "/api/v1/rollouts/{id}", false},
    {"GET", "/api/v1/analytics/averages", false},
    {"GET", "/api/v1/analytics/cdf", false},
    {"GET", "/api/v1/analytics/tags", false},
    {"GET", "/api/v1/analytics/ranklist", false},
    {"GET", "/api/v1/analytics/dominance", false},
    {"GET", "/api/v1/whoami", false},
    {"POST", "/api/v1/sandbox/rollouts", false},
}};

// True when `path` (without query) matches `pattern`.
constexpr bool route_matches(std::string_view pattern, std::string_view path) {
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < pattern.size() && j < path.size()) {
    if (pattern.substr(i, 4) == "{id}") {
      const std::size_t start = j;
      while (j < path.size() && path[j] != '/') ++j;
      if (j == start) return false;
      i += 4;
    } else {
      if (pattern[i] != path[j]) return false;
      ++i;
      ++j;
    }
  }
  return i == pattern.size() && j == path.size();
}

}  // namespace tb
