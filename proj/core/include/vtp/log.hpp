#pragma once

#include <string>

namespace vtp::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

// Messages go to stderr. The threshold defaults to kInfo and can be set with
// VTP_LOG_LEVEL=debug|info|warn|error|off.
void set_level(Level level);
Level level();

void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);

}  // namespace vtp::log
