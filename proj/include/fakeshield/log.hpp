#pragma once

#include <fmt/core.h>

#include <string_view>

namespace fakeshield {

enum class LogLevel { debug, info, warn, error, quiet };

// Defaults to info; FAKESHIELD_LOG=debug|info|warn|error|quiet overrides.
LogLevel log_level();
void set_log_level(LogLevel level);
void log_line(LogLevel level, std::string_view message);

template <class... Args>
void log_info(fmt::format_string<Args...> f, Args&&... args) {
  if (log_level() <= LogLevel::info) log_line(LogLevel::info, fmt::format(f, std::forward<Args>(args)...));
}
template <class... Args>
void log_warn(fmt::format_string<Args...> f, Args&&... args) {
  if (log_level() <= LogLevel::warn) log_line(LogLevel::warn, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace fakeshield
