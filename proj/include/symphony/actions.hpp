#pragma once

// The action vocabulary shared by every agent and environment, its textual
// call grammar (`agent.name(args)`), per-agent validation and the action
// similarity predicate used by loop detection.

#include <algorithm>
#include <array>
#include <bitset>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "symphony/error.hpp"
#include "symphony/image.hpp"
#include "symphony/log.hpp"

namespace symphony {

enum class MouseButton { left, right, middle };
enum class CursorPosition { start, end };

using KeyList = std::vector<std::string>;

namespace act {

struct Click {
  std::string desc;
  int num_clicks = 1;
  MouseButton button = MouseButton::left;
  KeyList hold_keys;
  friend bool operator==(const Click&, const Click&) = default;
};

struct Type {
  std::string desc;
  std::string text;
  bool overwrite = false;
  bool enter = false;
  bool terminal = false;
  friend bool operator==(const Type&, const Type&) = default;
};

// clicks > 0 scrolls up, < 0 scrolls down.
struct Scroll {
  std::string desc;
  int clicks = 0;
  bool shift = false;
  friend bool operator==(const Scroll&, const Scroll&) = default;
};

struct DragAndDrop {
  std::string start_desc;
  std::string end_desc;
  KeyList hold_keys;
  friend bool operator==(const DragAndDrop&, const DragAndDrop&) = default;
};

struct HighlightTextSpan {
  std::string start_phrase;
  std::string end_phrase;
  MouseButton button = MouseButton::left;
  friend bool operator==(const HighlightTextSpan&, const HighlightTextSpan&) = default;
};

struct LocateCursor {
  std::string phrase;
  CursorPosition pos = CursorPosition::start;
  std::optional<std::string> text;
  friend bool operator==(const LocateCursor&, const LocateCursor&) = default;
};

struct Hotkey {
  KeyList keys;
  friend bool operator==(const Hotkey&, const Hotkey&) = default;
};

struct HoldAndPress {
  KeyList hold_keys;
  KeyList press_keys;
  friend bool operator==(const HoldAndPress&, const HoldAndPress&) = default;
};

struct Open {
  std::string app_or_filename;
  friend bool operator==(const Open&, const Open&) = default;
};

struct CallSearchAgent {
  std::string query;
  friend bool operator==(const CallSearchAgent&, const CallSearchAgent&) = default;
};

struct CallCodeAgent {
  std::string task;
  friend bool operator==(const CallCodeAgent&, const CallCodeAgent&) = default;
};

struct Wait {
  double seconds = 0.0;
  friend bool operator==(const Wait&, const Wait&) = default;
};

struct Done {
  friend bool operator==(const Done&, const Done&) = default;
};

struct Fail {
  friend bool operator==(const Fail&, const Fail&) = default;
};

}  // namespace act

using Action = std::variant<act::Click, act::Type, act::Scroll, act::DragAndDrop,
                            act::HighlightTextSpan, act::LocateCursor, act::Hotkey,
                            act::HoldAndPress, act::Open, act::CallSearchAgent,
                            act::CallCodeAgent, act::Wait, act::Done, act::Fail>;

// Same order as the Action alternatives.
enum class ActionKind {
  click,
  type,
  scroll,
  drag_and_drop,
  highlight_text_span,
  locate_cursor,
  hotkey,
  hold_and_press,
  open,
  call_search_agent,
  call_code_agent,
  wait,
  done,
  fail,
};

inline constexpr std::size_t kActionKindCount = std::variant_size_v<Action>;

inline constexpr std::array<std::string_view, kActionKindCount> kActionNames = {
    "click",         "type",  "scroll",          "drag_and_drop",   "highlight_text_span",
    "locate_cursor", "hotkey", "hold_and_press", "open",            "call_search_agent",
    "call_code_agent", "wait", "done",           "fail"};

inline ActionKind kind_of(const Action& a) { return static_cast<ActionKind>(a.index()); }

inline std::string_view name_of(ActionKind k) { return kActionNames[static_cast<std::size_t>(k)]; }

inline std::optional<ActionKind> kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == name) return static_cast<ActionKind>(i);
  return std::nullopt;
}

// Category column of the action table; decides which grounder resolves it.
enum class GroundingRoute { general, ocr, none, tool, special };

inline GroundingRoute grounding_route(ActionKind k) {
  switch (k) {
    case ActionKind::click:
    case ActionKind::type:
    case ActionKind::scroll:
    case ActionKind::drag_and_drop: return GroundingRoute::general;
    case ActionKind::highlight_text_span:
    case ActionKind::locate_cursor: return GroundingRoute::ocr;
    case ActionKind::hotkey:
    case ActionKind::hold_and_press:
    case ActionKind::open: return GroundingRoute::none;
    case ActionKind::call_search_agent:
    case ActionKind::call_code_agent: return GroundingRoute::tool;
    default: return GroundingRoute::special;
  }
}

// Number of screen points a grounded action of this kind carries.
inline int coordinate_count(ActionKind k) {
  switch (k) {
    case ActionKind::click:
    case ActionKind::type:
    case ActionKind::scroll:
    case ActionKind::locate_cursor: return 1;
    case ActionKind::drag_and_drop:
    case ActionKind::highlight_text_span: return 2;
    default: return 0;
  }
}

inline bool is_coordinate_dependent(ActionKind k) { return coordinate_count(k) > 0; }

inline bool is_terminal(ActionKind k) { return k == ActionKind::done || k == ActionKind::fail; }

class ActionKindSet {
 public:
  ActionKindSet() = default;
  ActionKindSet(std::initializer_list<ActionKind> kinds) {
    for (auto k : kinds) insert(k);
  }
  static ActionKindSet all() {
    ActionKindSet s;
    s.bits_.set();
    return s;
  }
  void insert(ActionKind k) { bits_.set(static_cast<std::size_t>(k)); }
  bool contains(ActionKind k) const { return bits_.test(static_cast<std::size_t>(k)); }
  std::size_t size() const { return bits_.count(); }

 private:
  std::bitset<kActionKindCount> bits_;
};

struct GroundedAction {
  Action action;
  std::vector<Point> coordinates;
  friend bool operator==(const GroundedAction&, const GroundedAction&) = default;
};

// ---------------------------------------------------------------------------
// Call-syntax values and tokenizer

struct CallValue {
  enum class Kind { none, boolean, integer, real, string, list };
  Kind kind = Kind::none;
  bool b = false;
  std::int64_t i = 0;
  double d = 0.0;
  std::string s;
  std::vector<CallValue> items;
};

struct CallExpr {
  std::string name;
  std::vector<CallValue> positional;
  std::vector<std::pair<std::string, CallValue>> keyword;
  std::size_t end_offset = 0;  // one past the closing paren in the source
};

namespace detail {

class CallParser {
 public:
  explicit CallParser(std::string_view src, std::size_t pos = 0) : src_(src), pos_(pos) {}

  // Parses `agent.<name>(...)` starting at the current position.
  CallExpr parse_call() {
    skip_ws();
    expect_word("agent");
    skip_ws();
    expect('.');
    skip_ws();
    CallExpr call;
    call.name = identifier();
    skip_ws();
    expect('(');
    skip_ws();
    bool seen_keyword = false;
    if (!peek(')')) {
      while (true) {
        skip_ws();
        if (auto kw = keyword_name()) {
          call.keyword.emplace_back(*kw, value());
          seen_keyword = true;
        } else {
          if (seen_keyword)
            fail(ErrorCode::ArityError, "positional argument after keyword argument");
          call.positional.push_back(value());
        }
        skip_ws();
        if (!peek(',')) break;
        ++pos_;
        skip_ws();
        if (peek(')')) break;  // trailing comma
      }
    }
    skip_ws();
    expect(')');
    call.end_offset = pos_;
    return call;
  }

 private:
  char cur() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }
  bool peek(char c) const { return cur() == c; }
  bool peek_at(std::size_t off, char c) const {
    return pos_ + off < src_.size() && src_[pos_ + off] == c;
  }
  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

  // Consumes `name=` when present.
  std::optional<std::string> keyword_name() {
    if (!is_ident_start(cur())) return std::nullopt;
    std::size_t save = pos_;
    auto id = identifier();
    skip_ws();
    if (peek('=') && !peek_at(1, '=')) {
      ++pos_;
      skip_ws();
      return id;
    }
    pos_ = save;
    return std::nullopt;
  }

  void skip_ws() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }
  void expect(char c) {
    if (cur() != c)
      fail(ErrorCode::ArityError,
           std::string("expected '") + c + "' at offset " + std::to_string(pos_));
    ++pos_;
  }
  void expect_word(std::string_view w) {
    if (src_.substr(pos_, w.size()) != w) fail(ErrorCode::NoActionBlock, "expected agent call");
    pos_ += w.size();
  }
  std::string identifier() {
    if (!is_ident_start(cur()))
      fail(ErrorCode::ArityError, "expected identifier at offset " + std::to_string(pos_));
    std::size_t start = pos_;
    while (is_ident(cur())) ++pos_;
    return std::string(src_.substr(start, pos_ - start));
  }

  CallValue value() {
    skip_ws();
    CallValue v;
    char c = cur();
    if (c == '"' || c == '\'') {
      v.kind = CallValue::Kind::string;
      v.s = string_literal();
    } else if (c == '[' || c == '(') {
      char close = c == '[' ? ']' : ')';
      ++pos_;
      v.kind = CallValue::Kind::list;
      skip_ws();
      while (!peek(close)) {
        v.items.push_back(value());
        skip_ws();
        if (peek(',')) {
          ++pos_;
          skip_ws();
        } else {
          break;
        }
      }
      expect(close);
    } else if (c == '-' || c == '+' || c == '.' || (c >= '0' && c <= '9')) {
      number(v);
    } else if (is_ident_start(c)) {
      auto id = identifier();
      if (id == "True" || id == "true") {
        v.kind = CallValue::Kind::boolean;
        v.b = true;
      } else if (id == "False" || id == "false") {
        v.kind = CallValue::Kind::boolean;
        v.b = false;
      } else if (id == "None" || id == "null") {
        v.kind = CallValue::Kind::none;
      } else {
        fail(ErrorCode::ArityError, "unsupported bare identifier '" + id + "'");
      }
    } else {
      fail(ErrorCode::ArityError, "unexpected character in argument list");
    }
    return v;
  }

  void number(CallValue& v) {
    std::size_t start = pos_;
    if (cur() == '+' || cur() == '-') ++pos_;
    bool real = false;
    while (true) {
      char c = cur();
      if (c >= '0' && c <= '9') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        real = true;
        ++pos_;
        if ((c == 'e' || c == 'E') && (cur() == '+' || cur() == '-')) ++pos_;
      } else {
        break;
      }
    }
    std::string_view text = src_.substr(start, pos_ - start);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (real) {
      v.kind = CallValue::Kind::real;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v.d);
      if (ec != std::errc() || p != text.data() + text.size())
        fail(ErrorCode::ArityError, "malformed number");
    } else {
      v.kind = CallValue::Kind::integer;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v.i);
      if (ec != std::errc() || p != text.data() + text.size())
        fail(ErrorCode::ArityError, "malformed integer");
    }
  }

  std::string string_literal() {
    const char q = cur();
    const bool triple = peek_at(1, q) && peek_at(2, q);
    pos_ += triple ? 3 : 1;
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) fail(ErrorCode::ArityError, "unterminated string literal");
      char c = src_[pos_];
      if (c == '\\') {
        if (pos_ + 1 >= src_.size()) fail(ErrorCode::ArityError, "dangling escape");
        char e = src_[pos_ + 1];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case 'r': out.push_back('\r'); break;
          case '0': out.push_back('\0'); break;
          default: out.push_back(e); break;
        }
        pos_ += 2;
        continue;
      }
      if (c == q) {
        if (!triple) {
          ++pos_;
          break;
        }
        if (peek_at(1, q) && peek_at(2, q)) {
          pos_ += 3;
          break;
        }
      }
      out.push_back(c);
      ++pos_;
    }
    return out;
  }

  std::string_view src_;
  std::size_t pos_;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

struct FencedBlock {
  std::string lang;
  std::string body;
};

// All ``` fenced blocks in order of appearance. An unterminated trailing
// fence yields its remaining text.
inline std::vector<FencedBlock> fenced_blocks(std::string_view text) {
  std::vector<FencedBlock> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto line_end = text.find('\n', open + 3);
    if (line_end == std::string_view::npos) line_end = text.size();
    FencedBlock block;
    std::string_view header = text.substr(open + 3, line_end - open - 3);
    auto close = text.find("```", open + 3);
    if (close != std::string_view::npos && close < line_end) {
      // single-line fence: ```DONE```
      block.body = std::string(detail::trim(text.substr(open + 3, close - open - 3)));
      out.push_back(std::move(block));
      pos = close + 3;
      continue;
    }
    block.lang = std::string(detail::trim(header));
    std::size_t body_start = std::min(line_end + 1, text.size());
    close = text.find("```", body_start);
    std::size_t body_end = close == std::string_view::npos ? text.size() : close;
    block.body = std::string(text.substr(body_start, body_end - body_start));
    out.push_back(std::move(block));
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return out;
}

// Every `agent.<name>(...)` call in a code fragment, in order. Text that
// fails to parse after an `agent.` prefix is skipped unless it is the only
// candidate, in which case its error propagates.
inline std::vector<CallExpr> parse_calls(std::string_view code) {
  std::vector<CallExpr> calls;
  std::optional<Error> first_error;
  std::size_t pos = 0;
  while (true) {
    auto at = code.find("agent.", pos);
    if (at == std::string_view::npos) break;
    if (at > 0) {
      char prev = code[at - 1];
      if (std::isalnum(static_cast<unsigned char>(prev)) || prev == '_' || prev == '.') {
        pos = at + 6;
        continue;
      }
    }
    try {
      detail::CallParser p(code, at);
      auto call = p.parse_call();
      pos = call.end_offset;
      calls.push_back(std::move(call));
    } catch (const Error& e) {
      if (!first_error) first_error = e;
      pos = at + 6;
    }
  }
  if (calls.empty() && first_error) throw *first_error;
  return calls;
}

// ---------------------------------------------------------------------------
// Binding call arguments to action fields

namespace detail {

struct ParamSpec {
  std::string_view name;
  std::string_view alias;
  bool required;
};

class Binder {
 public:
  Binder(const CallExpr& call, std::initializer_list<ParamSpec> params)
      : call_(call), params_(params), slots_(params_.size(), nullptr) {
    if (call.positional.size() > params_.size())
      fail(ErrorCode::ArityError, "too many arguments for " + call.name + ": expected at most " +
                                      std::to_string(params_.size()));
    for (std::size_t i = 0; i < call.positional.size(); ++i) slots_[i] = &call.positional[i];
    for (const auto& [key, value] : call.keyword) {
      std::size_t idx = params_.size();
      for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == key || (!params_[i].alias.empty() && params_[i].alias == key))
          idx = i;
      if (idx == params_.size())
        fail(ErrorCode::ArityError, "unknown keyword '" + key + "' for " + call.name);
      if (slots_[idx]) fail(ErrorCode::ArityError, "duplicate argument '" + key + "'");
      slots_[idx] = &value;
    }
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].required && !slots_[i])
        fail(ErrorCode::ArityError,
             "missing argument '" + std::string(params_[i].name) + "' for " + call.name);
  }

  bool has(std::size_t i) const { return slots_[i] && slots_[i]->kind != CallValue::Kind::none; }

  std::string str(std::size_t i, std::string fallback = {}) const {
    if (!has(i)) return fallback;
    const auto& v = *slots_[i];
    if (v.kind != CallValue::Kind::string) type_error(i, "string");
    return v.s;
  }
  std::int64_t integer(std::size_t i, std::int64_t fallback) const {
    if (!has(i)) return fallback;
    const auto& v = *slots_[i];
    if (v.kind != CallValue::Kind::integer) type_error(i, "integer");
    return v.i;
  }
  double real(std::size_t i, double fallback) const {
    if (!has(i)) return fallback;
    const auto& v = *slots_[i];
    if (v.kind == CallValue::Kind::integer) return static_cast<double>(v.i);
    if (v.kind != CallValue::Kind::real) type_error(i, "number");
    return v.d;
  }
  bool boolean(std::size_t i, bool fallback) const {
    if (!has(i)) return fallback;
    const auto& v = *slots_[i];
    if (v.kind != CallValue::Kind::boolean) type_error(i, "boolean");
    return v.b;
  }
  KeyList keys(std::size_t i) const {
    if (!has(i)) return {};
    const auto& v = *slots_[i];
    KeyList out;
    if (v.kind == CallValue::Kind::string) {
      // 'ctrl+c' shorthand
      std::string_view s = v.s;
      std::size_t start = 0;
      while (start <= s.size()) {
        auto plus = s.find('+', start);
        if (plus == start && plus + 1 == s.size()) plus = std::string_view::npos;
        auto part = s.substr(start, plus == std::string_view::npos ? s.size() - start : plus - start);
        out.emplace_back(part);
        if (plus == std::string_view::npos) break;
        start = plus + 1;
      }
      return out;
    }
    if (v.kind != CallValue::Kind::list) type_error(i, "key list");
    for (const auto& item : v.items) {
      if (item.kind != CallValue::Kind::string) type_error(i, "key list");
      out.push_back(item.s);
    }
    return out;
  }
  MouseButton button(std::size_t i) const {
    auto s = str(i, "left");
    if (s == "left") return MouseButton::left;
    if (s == "right") return MouseButton::right;
    if (s == "middle") return MouseButton::middle;
    fail(ErrorCode::ArityError, "invalid button '" + s + "'");
  }
  CursorPosition position(std::size_t i) const {
    auto s = str(i, "start");
    if (s == "start") return CursorPosition::start;
    if (s == "end") return CursorPosition::end;
    fail(ErrorCode::ArityError, "invalid position '" + s + "'");
  }

 private:
  [[noreturn]] void type_error(std::size_t i, std::string_view expected) const {
    fail(ErrorCode::ArityError, "argument '" + std::string(params_[i].name) + "' of " +
                                    call_.name + " must be " + std::string(expected));
  }

  const CallExpr& call_;
  std::vector<ParamSpec> params_;
  std::vector<const CallValue*> slots_;
};

inline int narrow_int(std::int64_t v) {
  if (v < INT32_MIN || v > INT32_MAX) fail(ErrorCode::ArityError, "integer out of range");
  return static_cast<int>(v);
}

}  // namespace detail

inline Action action_from_call(const CallExpr& call) {
  using detail::Binder;
  auto kind = kind_from_name(call.name);
  if (!kind) fail(ErrorCode::UnknownAction, "agent." + call.name + " is not in the action space");
  switch (*kind) {
    case ActionKind::click: {
      Binder b(call, {{"desc", "element_description", true},
                      {"num_clicks", "", false},
                      {"button", "button_type", false},
                      {"hold_keys", "", false}});
      return act::Click{b.str(0), detail::narrow_int(b.integer(1, 1)), b.button(2), b.keys(3)};
    }
    case ActionKind::type: {
      Binder b(call, {{"desc", "element_description", true},
                      {"text", "", true},
                      {"overwrite", "", false},
                      {"enter", "", false},
                      {"terminal", "", false}});
      return act::Type{b.str(0), b.str(1), b.boolean(2, false), b.boolean(3, false),
                       b.boolean(4, false)};
    }
    case ActionKind::scroll: {
      Binder b(call, {{"desc", "element_description", true},
                      {"clicks", "", true},
                      {"shift", "", false}});
      return act::Scroll{b.str(0), detail::narrow_int(b.integer(1, 0)), b.boolean(2, false)};
    }
    case ActionKind::drag_and_drop: {
      Binder b(call, {{"start_desc", "starting_description", true},
                      {"end_desc", "ending_description", true},
                      {"hold_keys", "", false}});
      return act::DragAndDrop{b.str(0), b.str(1), b.keys(2)};
    }
    case ActionKind::highlight_text_span: {
      Binder b(call, {{"start_phrase", "starting_phrase", true},
                      {"end_phrase", "ending_phrase", true},
                      {"button", "", false}});
      return act::HighlightTextSpan{b.str(0), b.str(1), b.button(2)};
    }
    case ActionKind::locate_cursor: {
      Binder b(call, {{"phrase", "", true}, {"pos", "position", false}, {"text", "", false}});
      act::LocateCursor a{b.str(0), b.position(1), std::nullopt};
      if (b.has(2)) a.text = b.str(2);
      return a;
    }
    case ActionKind::hotkey: {
      Binder b(call, {{"keys", "", true}});
      return act::Hotkey{b.keys(0)};
    }
    case ActionKind::hold_and_press: {
      Binder b(call, {{"hold_keys", "", true}, {"press_keys", "", true}});
      return act::HoldAndPress{b.keys(0), b.keys(1)};
    }
    case ActionKind::open: {
      Binder b(call, {{"app_or_filename", "app_or_file_name", true}});
      return act::Open{b.str(0)};
    }
    case ActionKind::call_search_agent: {
      Binder b(call, {{"query", "", true}});
      return act::CallSearchAgent{b.str(0)};
    }
    case ActionKind::call_code_agent: {
      Binder b(call, {{"task", "", true}});
      return act::CallCodeAgent{b.str(0)};
    }
    case ActionKind::wait: {
      Binder b(call, {{"seconds", "time", true}});
      return act::Wait{b.real(0, 0.0)};
    }
    case ActionKind::done: {
      Binder b(call, {});
      return act::Done{};
    }
    case ActionKind::fail: {
      Binder b(call, {});
      return act::Fail{};
    }
  }
  fail(ErrorCode::UnknownAction, call.name);
}

struct ParsedAction {
  Action action;
  std::vector<std::string> warnings;
};

// Parses the grounded-action block of a model response. The response must
// contain a ``` fence unless it consists of exactly one bare call (the form
// used in trajectory logs). With several calls the first one wins.
inline ParsedAction parse_action_detailed(std::string_view text) {
  std::vector<std::string> warnings;
  auto trimmed = detail::trim(text);
  std::vector<std::string> candidates;
  if (trimmed.find("```") == std::string_view::npos) {
    if (trimmed.substr(0, 6) != "agent.")
      fail(ErrorCode::NoActionBlock, "response has no fenced action block");
    candidates.emplace_back(trimmed);
  } else {
    for (auto& block : fenced_blocks(text))
      if (block.body.find("agent.") != std::string::npos) candidates.push_back(block.body);
    if (candidates.empty()) fail(ErrorCode::NoActionBlock, "no fenced block contains an agent call");
  }
  std::optional<Error> first_error;
  for (std::size_t bi = 0; bi < candidates.size(); ++bi) {
    try {
      auto calls = parse_calls(candidates[bi]);
      if (calls.empty()) continue;
      auto action = action_from_call(calls.front());
      if (calls.size() > 1 || bi + 1 < candidates.size()) {
        warnings.push_back("multiple actions in one response; using agent." + calls.front().name);
        log::warn(warnings.back());
      }
      return {std::move(action), std::move(warnings)};
    } catch (const Error& e) {
      if (!first_error) first_error = e;
    }
  }
  if (first_error) throw *first_error;
  fail(ErrorCode::NoActionBlock, "no agent call found in action block");
}

inline Action parse_action(std::string_view text) { return parse_action_detailed(text).action; }

// ---------------------------------------------------------------------------
// Canonical text form

namespace detail {

inline std::string quote(std::string_view s, char q = '"') {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back(q);
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\0': out += "\\0"; break;
      default:
        if (c == q) out.push_back('\\');
        out.push_back(c);
    }
  }
  out.push_back(q);
  return out;
}

inline std::string key_list(const KeyList& keys) {
  std::string out = "[";
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i) out += ", ";
    out += quote(keys[i], '\'');
  }
  return out + "]";
}

inline std::string_view button_name(MouseButton b) {
  switch (b) {
    case MouseButton::right: return "right";
    case MouseButton::middle: return "middle";
    default: return "left";
  }
}

inline std::string real_text(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string py_bool(bool b) { return b ? "True" : "False"; }

// Joins arguments, dropping trailing ones equal to their defaults.
inline std::string call(std::string_view name, std::vector<std::string> args, std::size_t required,
                        std::vector<bool> is_default) {
  std::size_t n = args.size();
  while (n > required && is_default[n - 1]) --n;
  std::string out = "agent.";
  out += name;
  out += '(';
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ", ";
    out += args[i];
  }
  return out + ')';
}

}  // namespace detail

inline std::string format_action(const Action& action) {
  using namespace detail;
  struct Visitor {
    std::string operator()(const act::Click& a) const {
      return call("click", {quote(a.desc), std::to_string(a.num_clicks), quote(button_name(a.button)),
                            key_list(a.hold_keys)},
                  1, {false, a.num_clicks == 1, a.button == MouseButton::left, a.hold_keys.empty()});
    }
    std::string operator()(const act::Type& a) const {
      return call("type", {quote(a.desc), quote(a.text), py_bool(a.overwrite), py_bool(a.enter),
                           py_bool(a.terminal)},
                  2, {false, false, !a.overwrite, !a.enter, !a.terminal});
    }
    std::string operator()(const act::Scroll& a) const {
      return call("scroll", {quote(a.desc), std::to_string(a.clicks), py_bool(a.shift)}, 2,
                  {false, false, !a.shift});
    }
    std::string operator()(const act::DragAndDrop& a) const {
      return call("drag_and_drop", {quote(a.start_desc), quote(a.end_desc), key_list(a.hold_keys)},
                  2, {false, false, a.hold_keys.empty()});
    }
    std::string operator()(const act::HighlightTextSpan& a) const {
      return call("highlight_text_span",
                  {quote(a.start_phrase), quote(a.end_phrase), quote(button_name(a.button))}, 2,
                  {false, false, a.button == MouseButton::left});
    }
    std::string operator()(const act::LocateCursor& a) const {
      return call("locate_cursor",
                  {quote(a.phrase), quote(a.pos == CursorPosition::end ? "end" : "start"),
                   a.text ? quote(*a.text) : "None"},
                  1, {false, a.pos == CursorPosition::start && !a.text, !a.text});
    }
    std::string operator()(const act::Hotkey& a) const {
      return call("hotkey", {key_list(a.keys)}, 1, {false});
    }
    std::string operator()(const act::HoldAndPress& a) const {
      return call("hold_and_press", {key_list(a.hold_keys), key_list(a.press_keys)}, 2,
                  {false, false});
    }
    std::string operator()(const act::Open& a) const {
      return call("open", {quote(a.app_or_filename)}, 1, {false});
    }
    std::string operator()(const act::CallSearchAgent& a) const {
      return call("call_search_agent", {quote(a.query)}, 1, {false});
    }
    std::string operator()(const act::CallCodeAgent& a) const {
      return call("call_code_agent", {quote(a.task)}, 1, {false});
    }
    std::string operator()(const act::Wait& a) const {
      return call("wait", {real_text(a.seconds)}, 1, {false});
    }
    std::string operator()(const act::Done&) const { return "agent.done()"; }
    std::string operator()(const act::Fail&) const { return "agent.fail()"; }
  };
  return std::visit(Visitor{}, action);
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  ErrorCode code;
  std::string message;
};

inline std::vector<Violation> field_violations(const Action& action) {
  std::vector<Violation> out;
  auto bad = [&](std::string msg) {
    out.push_back({ErrorCode::FieldInvariantViolation, std::move(msg)});
  };
  auto check_keys = [&](const KeyList& keys, std::string_view field, bool non_empty) {
    if (non_empty && keys.empty()) bad(std::string(field) + " must not be empty");
    for (const auto& k : keys)
      if (k.empty()) bad(std::string(field) + " contains an empty key name");
  };
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, act::Click>) {
          if (a.num_clicks < 1) bad("click.num_clicks must be >= 1");
          check_keys(a.hold_keys, "click.hold_keys", false);
        } else if constexpr (std::is_same_v<T, act::Wait>) {
          if (!(a.seconds >= 0.0) || !std::isfinite(a.seconds)) bad("wait.seconds must be >= 0");
        } else if constexpr (std::is_same_v<T, act::Hotkey>) {
          check_keys(a.keys, "hotkey.keys", true);
        } else if constexpr (std::is_same_v<T, act::HoldAndPress>) {
          check_keys(a.hold_keys, "hold_and_press.hold_keys", true);
          check_keys(a.press_keys, "hold_and_press.press_keys", true);
        } else if constexpr (std::is_same_v<T, act::DragAndDrop>) {
          check_keys(a.hold_keys, "drag_and_drop.hold_keys", false);
        }
      },
      action);
  return out;
}

// Empty result means the action is acceptable for the caller's action space.
inline std::vector<Violation> validate(const Action& action, const ActionKindSet& allowed) {
  std::vector<Violation> out;
  if (!allowed.contains(kind_of(action)))
    out.push_back({ErrorCode::DisallowedVariant,
                   "agent." + std::string(name_of(kind_of(action))) + " is not permitted here"});
  auto fields = field_violations(action);
  out.insert(out.end(), fields.begin(), fields.end());
  return out;
}

// ---------------------------------------------------------------------------
// Similarity

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// 1 - distance / max(len); two empty strings are identical.
inline double levenshtein_similarity(std::string_view a, std::string_view b) {
  const auto longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

struct SimilarityThresholds {
  double coord_tolerance_fraction = 0.05;
  double levenshtein_min = 0.9;
};

// Whether an action is compared by resolved position (true) or by exact
// argument equality (false) in the similarity predicate.
inline bool compared_spatially(ActionKind k) {
  switch (k) {
    case ActionKind::click:
    case ActionKind::scroll:
    case ActionKind::drag_and_drop:
    case ActionKind::highlight_text_span:
    case ActionKind::locate_cursor: return true;
    default: return false;
  }
}

inline bool action_similarity(const Action& a, const Action& b, const ScreenGeometry& geom,
                              std::span<const Point> resolved_a, std::span<const Point> resolved_b,
                              const SimilarityThresholds& t = {}) {
  const auto ka = kind_of(a);
  const auto kb = kind_of(b);
  if (compared_spatially(ka) && resolved_a.size() < static_cast<std::size_t>(coordinate_count(ka)))
    fail(ErrorCode::MissingCoordinates, "first action lacks resolved coordinates");
  if (compared_spatially(kb) && resolved_b.size() < static_cast<std::size_t>(coordinate_count(kb)))
    fail(ErrorCode::MissingCoordinates, "second action lacks resolved coordinates");
  if (ka != kb) return false;

  if (compared_spatially(ka)) {
    const double tol = t.coord_tolerance_fraction * geom.diagonal();
    for (int i = 0; i < coordinate_count(ka); ++i)
      if (distance(resolved_a[i], resolved_b[i]) > tol) return false;
    return std::visit(
        [&](const auto& x) -> bool {
          using T = std::decay_t<decltype(x)>;
          const auto& y = std::get<T>(b);
          if constexpr (std::is_same_v<T, act::Click>)
            return x.num_clicks == y.num_clicks && x.button == y.button && x.hold_keys == y.hold_keys;
          else if constexpr (std::is_same_v<T, act::Scroll>)
            return x.clicks == y.clicks && x.shift == y.shift;
          else if constexpr (std::is_same_v<T, act::DragAndDrop>)
            return x.hold_keys == y.hold_keys;
          else if constexpr (std::is_same_v<T, act::HighlightTextSpan>)
            return x.button == y.button;
          else if constexpr (std::is_same_v<T, act::LocateCursor>)
            return x.pos == y.pos && x.text == y.text;
          else
            return false;
        },
        a);
  }
  if (ka == ActionKind::call_search_agent)
    return levenshtein_similarity(std::get<act::CallSearchAgent>(a).query,
                                  std::get<act::CallSearchAgent>(b).query) >= t.levenshtein_min;
  return a == b;
}

}  // namespace symphony
