#include "tablebench/server/auth.hpp"

#include <openssl/evp.h>

#include <fstream>

#include "tablebench/protocol/error.hpp"
#include "tablebench/protocol/json.hpp"

namespace tb::server {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInternal, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

void KeyRegistry::add_key(std::string_view key, Role role, std::string name) {
  if (key.empty()) throw Error(ErrorCode::kInvalidArgument, "empty API key");
  std::lock_guard lock(mu_);
  const auto hash = sha256_hex(key);
  by_hash_[hash] = {hash, role, std::move(name)};
}

void KeyRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot read keys file " + path);
  const Json doc = Json::parse(in);
  std::lock_guard lock(mu_);
  for (const auto& entry : doc) {
    const auto role_name = entry.value("role", "user");
    if (role_name != "user" && role_name != "tester") {
      throw Error(ErrorCode::kInvalidArgument, "keys file: unknown role '" + role_name + "'");
    }
    const Role role = role_name == "tester" ? Role::kTester : Role::kUser;
    std::string hash;
    if (entry.contains("sha256")) {
      hash = entry.at("sha256").get<std::string>();
    } else {
      hash = sha256_hex(entry.at("key").get<std::string>());
    }
    by_hash_[hash] = {hash, role, entry.value("name", "")};
  }
}

Principal KeyRegistry::authenticate(std::optional<std::string_view> key) const {
  if (!key || key->empty()) throw Error(ErrorCode::kUnauthorized, "missing API key");
  const auto hash = sha256_hex(*key);
  std::lock_guard lock(mu_);
  auto it = by_hash_.find(hash);
  if (it == by_hash_.end()) throw Error(ErrorCode::kUnauthorized, "unknown API key");
  return it->second;
}

}  // namespace tb::server
