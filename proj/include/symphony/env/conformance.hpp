#pragma once

// Environment adapter conformance suite. Any Environment, in-process or
// behind the socket wire, should pass it on a static fixture desktop.

#include <functional>
#include <string>
#include <vector>

#include "symphony/env/environment.hpp"
#include "symphony/features.hpp"

namespace symphony {

struct ConformanceFixture {
  std::string task_id = "conformance";
  Point click{10, 10};
  Point span_start{20, 20};
  Point span_end{60, 20};
};

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
  std::string render() const {
    std::string out;
    for (const auto& c : checks)
      out += std::string(c.passed ? "PASS " : "FAIL ") + c.name + (c.detail.empty() ? "" : ": " + c.detail) + "\n";
    return out;
  }
};

namespace detail {

inline std::string kinds_of(const std::vector<Primitive>& ps) {
  std::string out;
  for (const auto& p : ps) {
    if (!out.empty()) out += ",";
    out += to_string(p.kind);
  }
  return out;
}

// Runs fn and reports whether it raised `code`.
inline bool raises(const std::function<void()>& fn, ErrorCode code, std::string& detail) {
  try {
    fn();
    detail = "no error raised";
    return false;
  } catch (const Error& e) {
    detail = e.what();
    return e.code() == code;
  }
}

}  // namespace detail

inline ConformanceReport run_conformance(Environment& env, const ConformanceFixture& fx = {}) {
  ConformanceReport rep;
  auto check = [&](std::string name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
      auto [ok, detail] = body();
      rep.checks.push_back({std::move(name), ok, std::move(detail)});
    } catch (const std::exception& e) {
      rep.checks.push_back({std::move(name), false, e.what()});
    }
  };
  const auto caps = env.capabilities();
  const auto screen = env.screen();
  auto sized = [&](const Observation& o) {
    return o.valid() && o.image().width() == screen.width() && o.image().height() == screen.height();
  };

  check("handle id", [&] { return std::pair{!env.id().empty(), env.id()}; });
  check("reset returns a screen-sized screenshot", [&] {
    const auto o = env.reset(fx.task_id);
    return std::pair{sized(o), std::to_string(o.image().width()) + "x" + std::to_string(o.image().height())};
  });
  check("observe is idempotent", [&] {
    const auto a = env.observe();
    const auto b = env.observe();
    const int d = hamming(a.phash(), b.phash());
    return std::pair{sized(a) && sized(b) && d <= 1, "hamming " + std::to_string(d)};
  });

  if (caps.gui_primitives) {
    check("execute click", [&] {
      env.reset(fx.task_id);
      const auto o = env.execute({act::Click{"conformance target"}, {fx.click}});
      const auto kinds = detail::kinds_of(env.last_primitives());
      return std::pair{sized(o) && kinds == "move,click", kinds};
    });
    check("highlight_text_span is press-drag-release", [&] {
      env.reset(fx.task_id);
      env.execute({act::HighlightTextSpan{"from", "to"}, {fx.span_start, fx.span_end}});
      const auto ps = env.last_primitives();
      const bool ok = detail::kinds_of(ps) == "move,press,drag,release" && ps[0].point == fx.span_start &&
                      ps[1].point == fx.span_start && ps[2].point == fx.span_end && ps[3].point == fx.span_end;
      return std::pair{ok, detail::kinds_of(ps)};
    });
    check("hotkey presses in combination", [&] {
      env.reset(fx.task_id);
      env.execute({act::Hotkey{{"ctrl", "c"}}, {}});
      const auto kinds = detail::kinds_of(env.last_primitives());
      return std::pair{kinds == "key_down,key_down,key_up,key_up", kinds};
    });
    check("ungrounded click is rejected", [&] {
      std::string d;
      const bool ok = detail::raises([&] { env.execute({act::Click{"x"}, {}}); }, ErrorCode::MissingCoordinates, d);
      return std::pair{ok, d};
    });
    check("off-screen point is rejected", [&] {
      std::string d;
      const bool ok = detail::raises([&] { env.execute({act::Click{"x"}, {{screen.width(), 0}}}); },
                                     ErrorCode::PointOutOfBounds, d);
      return std::pair{ok, d};
    });
  } else {
    check("execute without gui_primitives", [&] {
      std::string d;
      const bool ok = detail::raises([&] { env.execute({act::Click{"x"}, {fx.click}}); },
                                     ErrorCode::UnsupportedCapability, d);
      return std::pair{ok, d};
    });
  }

  if (caps.command_channel) {
    check("command echo", [&] {
      const auto r = env.command({"bash", "echo hi"});
      auto out = r.stdout_text;
      while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
      return std::pair{out == "hi" && r.exit_code == 0, "stdout '" + out + "' exit " + std::to_string(r.exit_code)};
    });
  } else {
    check("command without channel", [&] {
      std::string d;
      const bool ok = detail::raises([&] { env.command({"bash", "echo hi"}); }, ErrorCode::UnsupportedCapability, d);
      return std::pair{ok, d};
    });
  }

  if (caps.ocr) {
    check("ocr ids dense and boxes in bounds", [&] {
      env.reset(fx.task_id);
      const auto t = env.ocr();
      const auto problem = t.problem(screen);
      const bool thr = t.width_threshold > 0.0 && t.width_threshold <= 1.0;
      return std::pair{!problem && thr, problem.value_or(std::to_string(t.rows.size()) + " rows")};
    });
  } else {
    check("ocr without capability", [&] {
      std::string d;
      const bool ok = detail::raises([&] { env.ocr(); }, ErrorCode::UnsupportedCapability, d);
      return std::pair{ok, d};
    });
  }
  return rep;
}

}  // namespace symphony
