#pragma once

#include <string>

namespace trustkit {

enum class LogLevel { error, warn, info, debug };

/// Level from TRUSTKIT_LOG (error|info|debug); default info.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_error(const std::string& msg);
void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace trustkit
