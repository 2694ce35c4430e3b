#include "fakeshield/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace fakeshield {

namespace {

LogLevel from_env() {
  const char* v = std::getenv("FAKESHIELD_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "debug") return LogLevel::debug;
  if (s == "warn") return LogLevel::warn;
  if (s == "error") return LogLevel::error;
  if (s == "quiet") return LogLevel::quiet;
  return LogLevel::info;
}

std::atomic<LogLevel>& level() {
  static std::atomic<LogLevel> l{from_env()};
  return l;
}

}  // namespace

LogLevel log_level() { return level().load(); }
void set_log_level(LogLevel l) { level().store(l); }

void log_line(LogLevel l, std::string_view message) {
  static std::mutex mu;
  static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(mu);
  std::fprintf(stderr, "[%s] %.*s\n", kNames[static_cast<int>(l)], static_cast<int>(message.size()),
               message.data());
}

}  // namespace fakeshield
