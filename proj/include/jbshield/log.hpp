#pragma once

#include <iostream>
#include <mutex>
#include <sstream>
#include <string_view>

namespace jbshield::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level level();
void set_level(Level);
Level level_from_string(std::string_view name);  // throws on unknown name

namespace detail {
void emit(Level lvl, const std::string& line);
}

template <class... Args>
void write(Level lvl, Args&&... args) {
  if (lvl > level()) return;
  std::ostringstream os;
  (os << ... << args);
  detail::emit(lvl, os.str());
}

template <class... Args>
void error(Args&&... args) {
  write(Level::Error, std::forward<Args>(args)...);
}
template <class... Args>
void warn(Args&&... args) {
  write(Level::Warn, std::forward<Args>(args)...);
}
template <class... Args>
void info(Args&&... args) {
  write(Level::Info, std::forward<Args>(args)...);
}
template <class... Args>
void debug(Args&&... args) {
  write(Level::Debug, std::forward<Args>(args)...);
}

}  // namespace jbshield::log
