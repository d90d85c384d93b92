#pragma once

#include <string_view>

namespace seqcox::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();
/// Parses "debug", "info", "warn", "error" or "off"; unknown strings keep the current level.
void set_level(std::string_view name);

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace seqcox::log
