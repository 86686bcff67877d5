#include "vtp/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace vtp::log {

namespace {

Level initial_level() {
  const char* env = std::getenv("VTP_LOG_LEVEL");
  if (!env) return Level::kInfo;
  const std::string_view v(env);
  if (v == "debug") return Level::kDebug;
  if (v == "warn") return Level::kWarn;
  if (v == "error") return Level::kError;
  if (v == "off") return Level::kOff;
  return Level::kInfo;
}

Level g_level = initial_level();
std::mutex g_mutex;

void emit(Level at, const char* tag, const std::string& msg) {
  if (at < g_level) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void debug(const std::string& msg) { emit(Level::kDebug, "debug", msg); }
void info(const std::string& msg) { emit(Level::kInfo, "info", msg); }
void warn(const std::string& msg) { emit(Level::kWarn, "warn", msg); }
void error(const std::string& msg) { emit(Level::kError, "error", msg); }

}  // namespace vtp::log
