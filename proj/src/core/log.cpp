#include "trustkit/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <mutex>

namespace trustkit {
namespace {

spdlog::level::level_enum to_spdlog(LogLevel l) {
  switch (l) {
    case LogLevel::error: return spdlog::level::err;
    case LogLevel::warn: return spdlog::level::warn;
    case LogLevel::info: return spdlog::level::info;
    case LogLevel::debug: return spdlog::level::debug;
  }
  return spdlog::level::info;
}

LogLevel env_level() {
  const char* v = std::getenv("TRUSTKIT_LOG");
  if (!v) return LogLevel::info;
  std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "warn") return LogLevel::warn;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

struct State {
  std::shared_ptr<spdlog::logger> logger;
  LogLevel level;
};

State& state() {
  static State s = [] {
    State st;
    st.logger = spdlog::stderr_color_mt("trustkit");
    st.logger->set_pattern("[%l] %v");
    st.level = env_level();
    st.logger->set_level(to_spdlog(st.level));
    return st;
  }();
  return s;
}

}  // namespace

LogLevel log_level() { return state().level; }

void set_log_level(LogLevel level) {
  state().level = level;
  state().logger->set_level(to_spdlog(level));
}

void log_error(const std::string& msg) { state().logger->error(msg); }
void log_warn(const std::string& msg) { state().logger->warn(msg); }
void log_info(const std::string& msg) { state().logger->info(msg); }
void log_debug(const std::string& msg) { state().logger->debug(msg); }

}  // namespace trustkit
