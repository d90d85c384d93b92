#include "seqcox/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace seqcox::log {

namespace {

std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

void emit(Level at, std::string_view tag, std::string_view msg) {
    if (at < g_level.load()) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "[seqcox " << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level level) { g_level = level; }

Level level() { return g_level.load(); }

void set_level(std::string_view name) {
    if (name == "debug") set_level(Level::debug);
    else if (name == "info") set_level(Level::info);
    else if (name == "warn") set_level(Level::warn);
    else if (name == "error") set_level(Level::error);
    else if (name == "off") set_level(Level::off);
}

void debug(std::string_view msg) { emit(Level::debug, "debug", msg); }
void info(std::string_view msg) { emit(Level::info, "info", msg); }
void warn(std::string_view msg) { emit(Level::warn, "warn", msg); }
void error(std::string_view msg) { emit(Level::error, "error", msg); }

}  // namespace seqcox::log
