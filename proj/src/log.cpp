#include "hardbatch/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace hardbatch {

namespace {

LogLevel parse_level(const char* env) {
  if (env == nullptr) return LogLevel::Info;
  const std::string v(env);
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "warn") return LogLevel::Warn;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void emit(LogLevel level, const char* tag, std::string_view msg) {
  if (static_cast<int>(log_level()) < static_cast<int>(level)) return;
  std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level(std::getenv("HARDBATCH_LOG"));
  return level;
}

void log_warn(std::string_view msg) { emit(LogLevel::Warn, "warn", msg); }
void log_info(std::string_view msg) { emit(LogLevel::Info, "info", msg); }
void log_debug(std::string_view msg) { emit(LogLevel::Debug, "debug", msg); }

}  // namespace hardbatch
