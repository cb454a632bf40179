#pragma once

#include <string>

namespace suparc {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from the LOG_LEVEL environment variable (error|info|debug)
// the first time it is queried; set_log_level overrides it.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace suparc
