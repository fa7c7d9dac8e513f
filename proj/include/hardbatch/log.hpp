#pragma once

#include <string_view>

namespace hardbatch {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

/// Read once from HARDBATCH_LOG (quiet | warn | info | debug); default info.
LogLevel log_level();

void log_warn(std::string_view msg);
void log_info(std::string_view msg);
void log_debug(std::string_view msg);

}  // namespace hardbatch
