#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace tb::server {

enum class Role { kUser, kTester };

struct Principal {
  // SHA-256 of the key, hex. Raw keys are never kept.
  std::string key_hash;
  Role role = Role::kUser;
  std::string name;

  bool tester() const { return role == Role::kTester; }
};

std::string sha256_hex(std::string_view data);

inline constexpr std::string_view kApiKeyHeader = "X-API-Key";

class KeyRegistry {
 public:
  void add_key(std::string_view key, Role role, std::string name);
  // Keys file: JSON array of {"key" | "sha256", "role": "user"|"tester", "name"}.
  void load_file(const std::string& path);
  // Throws kUnauthorized for a missing or unknown key.
  Principal authenticate(std::optional<std::string_view> key) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Principal> by_hash_;
};

}  // namespace tb::server
