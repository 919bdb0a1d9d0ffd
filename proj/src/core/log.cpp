#include "letter/core/log.hpp"

#include <atomic>
#include <iostream>

namespace letter::log {

namespace {
std::atomic<Level> g_level{Level::Warn};
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view message) {
  if (g_level >= Level::Warn) std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
  if (g_level >= Level::Info) std::cerr << message << '\n';
}

}  // namespace letter::log
