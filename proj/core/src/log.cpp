#include "suparc/log.hpp"

#include <cstdlib>
#include <iostream>

namespace suparc {

namespace {

LogLevel parse_env_level() {
  const char* raw = std::getenv("LOG_LEVEL");
  if (raw == nullptr) return LogLevel::info;
  std::string v(raw);
  if (v == "error") return LogLevel::error;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::info;
}

LogLevel& level_slot() {
  static LogLevel level = parse_env_level();
  return level;
}

}  // namespace

LogLevel log_level() { return level_slot(); }

void set_log_level(LogLevel level) { level_slot() = level; }

void log_error(const std::string& message) {
  std::cerr << "[error] " << message << "\n";
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::info) std::cerr << "[info] " << message << "\n";
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::debug) std::cerr << "[debug] " << message << "\n";
}

}  // namespace suparc
