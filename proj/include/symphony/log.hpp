#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace symphony::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
struct State {
  std::mutex mu;
  Level threshold = Level::warn;
  Sink sink;
};
inline State& state() {
  static State s;
  return s;
}
inline std::string_view level_name(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    default: return "off";
  }
}
}  // namespace detail

inline void set_level(Level l) {
  std::lock_guard lock(detail::state().mu);
  detail::state().threshold = l;
}

// Replaces the stderr sink. Pass an empty function to restore it.
inline void set_sink(Sink sink) {
  std::lock_guard lock(detail::state().mu);
  detail::state().sink = std::move(sink);
}

inline void write(Level l, std::string_view msg) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  if (s.sink) {
    s.sink(l, msg);
    return;
  }
  if (l < s.threshold) return;
  std::cerr << "[symphony " << detail::level_name(l) << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

// Collects messages for the lifetime of the guard; used by tests.
class Capture {
 public:
  Capture() {
    set_sink([this](Level l, std::string_view m) {
      std::lock_guard lock(mu_);
      lines_.push_back({l, std::string(m)});
    });
  }
  ~Capture() { set_sink({}); }
  Capture(const Capture&) = delete;
  Capture& operator=(const Capture&) = delete;

  struct Line {
    Level level;
    std::string text;
  };

  std::vector<Line> lines() const {
    std::lock_guard lock(mu_);
    return lines_;
  }

  bool contains(std::string_view needle) const {
    std::lock_guard lock(mu_);
    for (const auto& l : lines_)
      if (l.text.find(needle) != std::string::npos) return true;
    return false;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Line> lines_;
};

}  // namespace symphony::log
