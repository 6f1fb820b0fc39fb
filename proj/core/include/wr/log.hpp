#pragma once

#include <iostream>
#include <mutex>
#include <string>

namespace wr::log {

enum class Level { debug = 0, info = 1, warn = 2, quiet = 3 };

inline Level& min_level() {
  static Level lvl = Level::info;
  return lvl;
}

inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}

inline void emit(Level lvl, const char* tag, const std::string& msg) {
  if (lvl < min_level()) return;
  std::lock_guard<std::mutex> lock(mutex());
  std::cerr << tag << msg << '\n';
}

inline void debug(const std::string& msg) { emit(Level::debug, "[debug] ", msg); }
inline void info(const std::string& msg) { emit(Level::info, "[info] ", msg); }
inline void warn(const std::string& msg) { emit(Level::warn, "[warn] ", msg); }

}  // namespace wr::log
