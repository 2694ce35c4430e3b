#pragma once

// Session persistence: an SQLite table keyed by session id plus a
// content-addressed directory for image and mask bytes.

#include "fakeshield/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

struct sqlite3;

namespace fakeshield::service {

using Clock = std::function<int64_t()>;  // unix seconds
Clock system_clock();

// Files live at <root>/<first two hex chars>/<sha256>. Writes go through a
// temporary file and a rename.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);
  std::string put(std::span<const uint8_t> bytes);  // returns the sha256 ref
  Bytes get(const std::string& ref) const;          // NotFoundError if absent
  bool contains(const std::string& ref) const;
  void remove(const std::string& ref);
  std::filesystem::path path_for(const std::string& ref) const;

 private:
  std::filesystem::path root_;
};

struct SessionTurn {
  std::string question;
  std::string answer;
  int64_t timestamp = 0;
};

struct Session {
  std::string id;
  std::string status = "complete";  // "pending", "complete" or "failed"
  std::string error;                // for failed sessions
  int64_t created_at = 0;
  int64_t expires_at = 0;
  std::string image_ref;
  std::optional<nlohmann::json> domain;  // {domain, sentence, probs}
  std::string raw_text;
  std::string verdict;
  std::string location;
  std::string basis;
  std::vector<std::string> flags;
  std::optional<std::string> mask_ref;
  std::vector<SessionTurn> turns;
  nlohmann::json model_versions = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const Session& s);
void from_json(const nlohmann::json& j, Session& s);

// Thread-safe; one connection guarded by a mutex. Expired sessions read as
// missing.
class SessionStore {
 public:
  SessionStore(const std::filesystem::path& db_path, Clock clock);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  void put(const Session& s);
  std::optional<Session> get(const std::string& id) const;
  // Sessions left pending by an earlier process are marked failed.
  int fail_pending(const std::string& reason);
  // Deletes expired rows; returns the blob refs no live session still uses.
  std::vector<std::string> purge_expired();
  int64_t now() const { return clock_(); }

 private:
  void exec(const char* sql) const;
  sqlite3* db_ = nullptr;
  Clock clock_;
  mutable std::mutex mu_;
};

}  // namespace fakeshield::service
