#include "fakeshield/service/store.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/hash.hpp"

#include <sqlite3.h>

#include <chrono>
#include <set>

namespace fakeshield::service {

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

BlobStore::BlobStore(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

std::filesystem::path BlobStore::path_for(const std::string& ref) const {
  if (ref.size() != 64 || ref.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw NotFoundError("bad blob reference");
  }
  return root_ / ref.substr(0, 2) / ref;
}

std::string BlobStore::put(std::span<const uint8_t> bytes) {
  const auto ref = sha256_hex(bytes);
  const auto path = path_for(ref);
  if (!std::filesystem::exists(path)) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
  }
  return ref;
}

Bytes BlobStore::get(const std::string& ref) const {
  const auto path = path_for(ref);
  if (!std::filesystem::is_regular_file(path)) throw NotFoundError("blob " + ref + " is missing");
  return read_file(path);
}

bool BlobStore::contains(const std::string& ref) const { return std::filesystem::is_regular_file(path_for(ref)); }

void BlobStore::remove(const std::string& ref) {
  std::error_code ec;
  std::filesystem::remove(path_for(ref), ec);
}

void to_json(nlohmann::json& j, const Session& s) {
  j = {{"session_id", s.id},       {"status", s.status},         {"created_at", s.created_at},
       {"expires_at", s.expires_at}, {"image_ref", s.image_ref},   {"raw_text", s.raw_text},
       {"verdict", s.verdict},     {"location", s.location},     {"basis", s.basis},
       {"flags", s.flags},         {"model_versions", s.model_versions}};
  j["domain"] = s.domain ? *s.domain : nlohmann::json(nullptr);
  j["mask_ref"] = s.mask_ref ? nlohmann::json(*s.mask_ref) : nlohmann::json(nullptr);
  j["has_mask"] = s.mask_ref.has_value();
  if (!s.error.empty()) j["error"] = s.error;
  auto& turns = j["turns"] = nlohmann::json::array();
  for (const auto& t : s.turns) turns.push_back({{"question", t.question}, {"answer", t.answer}, {"timestamp", t.timestamp}});
}

void from_json(const nlohmann::json& j, Session& s) {
  s.id = j.at("session_id").get<std::string>();
  s.status = j.at("status").get<std::string>();
  s.error = j.value("error", "");
  s.created_at = j.at("created_at").get<int64_t>();
  s.expires_at = j.at("expires_at").get<int64_t>();
  s.image_ref = j.at("image_ref").get<std::string>();
  if (!j.at("domain").is_null()) s.domain = j.at("domain");
  s.raw_text = j.at("raw_text").get<std::string>();
  s.verdict = j.at("verdict").get<std::string>();
  s.location = j.at("location").get<std::string>();
  s.basis = j.at("basis").get<std::string>();
  s.flags = j.at("flags").get<std::vector<std::string>>();
  if (!j.at("mask_ref").is_null()) s.mask_ref = j.at("mask_ref").get<std::string>();
  s.model_versions = j.at("model_versions");
  s.turns.clear();
  for (const auto& t : j.at("turns")) {
    s.turns.push_back({t.at("question").get<std::string>(), t.at("answer").get<std::string>(), t.at("timestamp").get<int64_t>()});
  }
}

namespace {

struct Statement {
  sqlite3_stmt* stmt = nullptr;
  Statement(sqlite3* db, const char* sql) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt, nullptr) != SQLITE_OK) {
      throw std::runtime_error(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt); }
  void text(int i, const std::string& s) { sqlite3_bind_text(stmt, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT); }
  void integer(int i, int64_t v) { sqlite3_bind_int64(stmt, i, v); }
  std::string column_text(int i) const {
    const auto* p = sqlite3_column_text(stmt, i);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<size_t>(sqlite3_column_bytes(stmt, i))) : std::string();
  }
};

void check_done(sqlite3* db, int rc) {
  if (rc != SQLITE_DONE) throw std::runtime_error(std::string("sqlite step failed: ") + sqlite3_errmsg(db));
}

}  // namespace

SessionStore::SessionStore(const std::filesystem::path& db_path, Clock clock) : clock_(std::move(clock)) {
  if (db_path.has_parent_path()) std::filesystem::create_directories(db_path.parent_path());
  if (sqlite3_open(db_path.c_str(), &db_) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw ConfigError("cannot open session store " + db_path.string() + ": " + msg);
  }
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=NORMAL");
  exec("CREATE TABLE IF NOT EXISTS sessions (id TEXT PRIMARY KEY, expires_at INTEGER NOT NULL, body TEXT NOT NULL)");
}

SessionStore::~SessionStore() { sqlite3_close(db_); }

void SessionStore::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    const std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw std::runtime_error("sqlite: " + msg);
  }
}

void SessionStore::put(const Session& s) {
  std::lock_guard lock(mu_);
  Statement st(db_, "INSERT OR REPLACE INTO sessions (id, expires_at, body) VALUES (?, ?, ?)");
  st.text(1, s.id);
  st.integer(2, s.expires_at);
  st.text(3, nlohmann::json(s).dump());
  check_done(db_, sqlite3_step(st.stmt));
}

std::optional<Session> SessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT body FROM sessions WHERE id = ? AND expires_at > ?");
  st.text(1, id);
  st.integer(2, clock_());
  const int rc = sqlite3_step(st.stmt);
  if (rc == SQLITE_DONE) return std::nullopt;
  if (rc != SQLITE_ROW) throw std::runtime_error(std::string("sqlite step failed: ") + sqlite3_errmsg(db_));
  return nlohmann::json::parse(st.column_text(0)).get<Session>();
}

int SessionStore::fail_pending(const std::string& reason) {
  std::vector<Session> pending;
  {
    std::lock_guard lock(mu_);
    Statement st(db_, "SELECT body FROM sessions");
    while (sqlite3_step(st.stmt) == SQLITE_ROW) {
      auto s = nlohmann::json::parse(st.column_text(0)).get<Session>();
      if (s.status == "pending") pending.push_back(std::move(s));
    }
  }
  for (auto& s : pending) {
    s.status = "failed";
    s.error = reason;
    put(s);
  }
  return static_cast<int>(pending.size());
}

std::vector<std::string> SessionStore::purge_expired() {
  std::lock_guard lock(mu_);
  std::set<std::string> dead, live;
  {
    Statement st(db_, "SELECT expires_at, body FROM sessions");
    const int64_t now = clock_();
    while (sqlite3_step(st.stmt) == SQLITE_ROW) {
      const auto s = nlohmann::json::parse(st.column_text(1)).get<Session>();
      auto& bucket = sqlite3_column_int64(st.stmt, 0) > now ? live : dead;
      bucket.insert(s.image_ref);
      if (s.mask_ref) bucket.insert(*s.mask_ref);
    }
  }
  Statement del(db_, "DELETE FROM sessions WHERE expires_at <= ?");
  del.integer(1, clock_());
  check_done(db_, sqlite3_step(del.stmt));
  std::vector<std::string> out;
  for (const auto& r : dead) {
    if (!live.contains(r) && !r.empty()) out.push_back(r);
  }
  return out;
}

}  // namespace fakeshield::service
