#pragma once

// Environment interface: what the kernel needs from a desktop (simulated,
// remote or real), and the mapping from grounded actions to input
// primitives.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "symphony/actions.hpp"
#include "symphony/error.hpp"
#include "symphony/image.hpp"
#include "symphony/observation.hpp"

namespace symphony {

struct Capabilities {
  bool gui_primitives = true;
  bool command_channel = false;
  bool search_sandbox = false;
  bool ocr = false;
  friend bool operator==(const Capabilities&, const Capabilities&) = default;
};

struct CommandRequest {
  std::string language;  // "bash" | "python"
  std::string code;
};

struct CommandResult {
  std::string stdout_text;
  std::string stderr_text;
  int exit_code = 0;
  friend bool operator==(const CommandResult&, const CommandResult&) = default;
};

struct OcrRow {
  std::string text;
  int id = 0;
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  friend bool operator==(const OcrRow&, const OcrRow&) = default;
};

struct OcrTable {
  std::vector<OcrRow> rows;
  double width_threshold = 0.1;

  // Dense ids from 0 and boxes inside the screen; returns the first problem.
  std::optional<std::string> problem(const ScreenGeometry& screen) const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.id != static_cast<int>(i)) return "ids are not dense at row " + std::to_string(i);
      if (r.x1 < 0 || r.y1 < 0 || r.x2 > screen.width() || r.y2 > screen.height() || r.x1 > r.x2 || r.y1 > r.y2)
        return "bbox out of bounds at row " + std::to_string(i);
    }
    return std::nullopt;
  }
  const OcrRow* find(int id) const {
    for (const auto& r : rows)
      if (r.id == id) return &r;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Primitives

enum class PrimitiveKind { move, press, release, drag, click, key_down, key_up, type_text, scroll, open, wait };

inline std::string_view to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::move: return "move";
    case PrimitiveKind::press: return "press";
    case PrimitiveKind::release: return "release";
    case PrimitiveKind::drag: return "drag";
    case PrimitiveKind::click: return "click";
    case PrimitiveKind::key_down: return "key_down";
    case PrimitiveKind::key_up: return "key_up";
    case PrimitiveKind::type_text: return "type_text";
    case PrimitiveKind::scroll: return "scroll";
    case PrimitiveKind::open: return "open";
    case PrimitiveKind::wait: return "wait";
  }
  return "move";
}

inline std::optional<PrimitiveKind> primitive_kind_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(PrimitiveKind::wait); ++i)
    if (to_string(static_cast<PrimitiveKind>(i)) == s) return static_cast<PrimitiveKind>(i);
  return std::nullopt;
}

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::move;
  Point point;
  MouseButton button = MouseButton::left;
  int amount = 0;    // click count or scroll clicks
  std::string text;  // key name, text to type, app to open
  double seconds = 0.0;
  friend bool operator==(const Primitive&, const Primitive&) = default;
};

namespace detail {

inline void keys_down(std::vector<Primitive>& out, const KeyList& keys) {
  for (const auto& k : keys) out.push_back({PrimitiveKind::key_down, {}, MouseButton::left, 0, k});
}
inline void keys_up(std::vector<Primitive>& out, const KeyList& keys) {
  for (auto it = keys.rbegin(); it != keys.rend(); ++it)
    out.push_back({PrimitiveKind::key_up, {}, MouseButton::left, 0, *it});
}
inline void tap(std::vector<Primitive>& out, const std::string& key) {
  out.push_back({PrimitiveKind::key_down, {}, MouseButton::left, 0, key});
  out.push_back({PrimitiveKind::key_up, {}, MouseButton::left, 0, key});
}

}  // namespace detail

// Rejects dispatches that break the grounding contract.
inline void check_dispatchable(const GroundedAction& ga, const ScreenGeometry& screen) {
  const auto kind = kind_of(ga.action);
  const auto route = grounding_route(kind);
  if (route == GroundingRoute::tool || kind == ActionKind::done || kind == ActionKind::fail)
    fail(ErrorCode::Precondition, std::string(name_of(kind)) + " is never dispatched to an environment");
  const auto need = static_cast<std::size_t>(coordinate_count(kind));
  if (ga.coordinates.size() < need)
    fail(ErrorCode::MissingCoordinates, std::string(name_of(kind)) + " needs resolved coordinates");
  if (need == 0 && !ga.coordinates.empty())
    fail(ErrorCode::Precondition, std::string(name_of(kind)) + " takes no coordinates");
  for (const auto& p : ga.coordinates)
    if (!screen.contains(p))
      fail(ErrorCode::PointOutOfBounds, "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") is off screen");
}

// Input primitive sequence for a grounded action, as a desktop executor
// would replay it.
inline std::vector<Primitive> primitives_for(const GroundedAction& ga) {
  using K = PrimitiveKind;
  std::vector<Primitive> out;
  const auto& pts = ga.coordinates;
  auto at = [&](std::size_t i) { return i < pts.size() ? pts[i] : Point{}; };
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, act::Click>) {
          detail::keys_down(out, a.hold_keys);
          out.push_back({K::move, at(0)});
          out.push_back({K::click, at(0), a.button, a.num_clicks});
          detail::keys_up(out, a.hold_keys);
        } else if constexpr (std::is_same_v<T, act::Type>) {
          out.push_back({K::move, at(0)});
          out.push_back({K::click, at(0), MouseButton::left, 1});
          if (a.overwrite) {
            detail::keys_down(out, {"ctrl", "a"});
            detail::keys_up(out, {"ctrl", "a"});
            detail::tap(out, "backspace");
          }
          out.push_back({K::type_text, {}, MouseButton::left, a.terminal ? 1 : 0, a.text});
          if (a.enter) detail::tap(out, "enter");
        } else if constexpr (std::is_same_v<T, act::Scroll>) {
          out.push_back({K::move, at(0)});
          if (a.shift) out.push_back({K::key_down, {}, MouseButton::left, 0, "shift"});
          out.push_back({K::scroll, at(0), MouseButton::left, a.clicks});
          if (a.shift) out.push_back({K::key_up, {}, MouseButton::left, 0, "shift"});
        } else if constexpr (std::is_same_v<T, act::DragAndDrop>) {
          detail::keys_down(out, a.hold_keys);
          out.push_back({K::move, at(0)});
          out.push_back({K::press, at(0), MouseButton::left});
          out.push_back({K::drag, at(1), MouseButton::left});
          out.push_back({K::release, at(1), MouseButton::left});
          detail::keys_up(out, a.hold_keys);
        } else if constexpr (std::is_same_v<T, act::HighlightTextSpan>) {
          out.push_back({K::move, at(0)});
          out.push_back({K::press, at(0), a.button});
          out.push_back({K::drag, at(1), a.button});
          out.push_back({K::release, at(1), a.button});
        } else if constexpr (std::is_same_v<T, act::LocateCursor>) {
          out.push_back({K::move, at(0)});
          out.push_back({K::click, at(0), MouseButton::left, 1});
          if (a.text) out.push_back({K::type_text, {}, MouseButton::left, 0, *a.text});
        } else if constexpr (std::is_same_v<T, act::Hotkey>) {
          detail::keys_down(out, a.keys);
          detail::keys_up(out, a.keys);
        } else if constexpr (std::is_same_v<T, act::HoldAndPress>) {
          detail::keys_down(out, a.hold_keys);
          for (const auto& k : a.press_keys) detail::tap(out, k);
          detail::keys_up(out, a.hold_keys);
        } else if constexpr (std::is_same_v<T, act::Open>) {
          out.push_back({K::open, {}, MouseButton::left, 0, a.app_or_filename});
        } else if constexpr (std::is_same_v<T, act::Wait>) {
          out.push_back({K::wait, {}, MouseButton::left, 0, {}, a.seconds});
        }
      },
      ga.action);
  return out;
}

// ---------------------------------------------------------------------------

class Environment {
 public:
  virtual ~Environment() = default;

  // Stable handle identity; tool-agent isolation is checked against it.
  virtual std::string id() const = 0;
  virtual Capabilities capabilities() const = 0;
  virtual ScreenGeometry screen() const = 0;

  virtual Observation reset(const std::string& task_id) = 0;
  virtual Observation observe() = 0;
  // Dispatches the primitive sequence and returns the post-action screenshot.
  virtual Observation execute(const GroundedAction& ga) = 0;

  virtual CommandResult command(const CommandRequest&) {
    fail(ErrorCode::UnsupportedCapability, id() + " has no command channel");
  }
  virtual OcrTable ocr() { fail(ErrorCode::UnsupportedCapability, id() + " has no OCR"); }

  // Primitives replayed by the most recent execute, when the executor
  // reports them.
  virtual std::vector<Primitive> last_primitives() const { return {}; }

 protected:
  void require(bool flag, const char* what) const {
    if (!flag) fail(ErrorCode::UnsupportedCapability, id() + " lacks " + what);
  }
};

using EnvironmentPtr = std::shared_ptr<Environment>;

// Opens a fresh search sandbox positioned on the results page for a query.
using SandboxFactory = std::function<EnvironmentPtr(const std::string& query)>;

}  // namespace symphony
