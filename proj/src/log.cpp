#include "casenbr/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace casenbr::log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

void emit(const char* tag, std::string_view message) {
  std::lock_guard lock(g_mutex);
  std::cerr << tag << message << '\n';
}
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void warn(std::string_view message) {
  if (g_level >= Level::warn) emit("warning: ", message);
}

void info(std::string_view message) {
  if (g_level >= Level::info) emit("", message);
}

}  // namespace casenbr::log
