#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>

namespace btloc::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {
struct State {
  std::mutex mutex;
  Level threshold = Level::Warn;
  Sink sink;
};
inline State& state() {
  static State s;
  return s;
}
inline const char* tag(Level l) {
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    default: return "";
  }
}
}  // namespace detail

inline void set_level(Level l) {
  std::lock_guard lock(detail::state().mutex);
  detail::state().threshold = l;
}

/// Replaces the default stderr sink (tests use this to count warnings).
inline void set_sink(Sink sink) {
  std::lock_guard lock(detail::state().mutex);
  detail::state().sink = std::move(sink);
}

template <class... Args>
void write(Level l, Args&&... args) {
  auto& st = detail::state();
  std::lock_guard lock(st.mutex);
  if (l < st.threshold) return;
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  if (st.sink) {
    st.sink(l, os.str());
  } else {
    std::clog << "[btloc " << detail::tag(l) << "] " << os.str() << '\n';
  }
}

template <class... Args>
void debug(Args&&... a) { write(Level::Debug, std::forward<Args>(a)...); }
template <class... Args>
void info(Args&&... a) { write(Level::Info, std::forward<Args>(a)...); }
template <class... Args>
void warn(Args&&... a) { write(Level::Warn, std::forward<Args>(a)...); }
template <class... Args>
void error(Args&&... a) { write(Level::Error, std::forward<Args>(a)...); }

}  // namespace btloc::log
