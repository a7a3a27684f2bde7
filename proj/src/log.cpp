#include "jbshield/log.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

namespace jbshield::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

const char* tag(Level lvl) {
  switch (lvl) {
    case Level::Error: return "error";
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
  }
  return "?";
}
}  // namespace

Level level() { return g_level.load(std::memory_order_relaxed); }
void set_level(Level lvl) { g_level.store(lvl, std::memory_order_relaxed); }

Level level_from_string(std::string_view name) {
  if (name == "error") return Level::Error;
  if (name == "warn") return Level::Warn;
  if (name == "info") return Level::Info;
  if (name == "debug") return Level::Debug;
  throw std::invalid_argument("unknown log level: " + std::string(name));
}

namespace detail {
void emit(Level lvl, const std::string& line) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[" << tag(lvl) << "] " << line << "\n";
}
}  // namespace detail

}  // namespace jbshield::log
