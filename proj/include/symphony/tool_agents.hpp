#pragma once

// Tool agents: the two grounders, the sandboxed Searcher loop and the Coder
// loop. Searcher and Coder fold their inner turns into a ToolRecord; only the
// tutorial or a one-line result reaches the orchestrator.

#include <charconv>
#include <string>
#include <vector>

#include "symphony/actions.hpp"
#include "symphony/backends/model.hpp"
#include "symphony/env/environment.hpp"
#include "symphony/prompts.hpp"
#include "symphony/rma.hpp"
#include "symphony/trajectory.hpp"

namespace symphony {

// ---------------------------------------------------------------------------
// Grounding

struct GroundingConfig {
  double temperature = 0.0;
  std::string session = "grounder";
};

struct PointResult {
  Point point;
  TokenUsage tokens;
  bool clamped = false;
};

namespace detail {

inline std::optional<long> read_int(std::string_view s, std::size_t& i) {
  while (i < s.size() && s[i] == ' ') ++i;
  const auto start = i;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) ++i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  long v = 0;
  const char* b = s.data() + start + (s[start] == '+' ? 1 : 0);
  auto [p, ec] = std::from_chars(b, s.data() + i, v);
  if (ec != std::errc() || p == b) return std::nullopt;
  // skip a fractional part; coordinates are whole pixels
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  }
  return v;
}

inline bool declines(std::string_view reply) {
  const auto t = lower(trim(reply));
  return t.rfind("none", 0) == 0;
}

}  // namespace detail

// First "(x, y)" pair in the reply.
inline std::optional<Point> parse_point(std::string_view reply) {
  for (std::size_t at = reply.find('('); at != std::string_view::npos; at = reply.find('(', at + 1)) {
    std::size_t i = at + 1;
    const auto x = detail::read_int(reply, i);
    if (!x) continue;
    while (i < reply.size() && reply[i] == ' ') ++i;
    if (i >= reply.size() || reply[i] != ',') continue;
    ++i;
    const auto y = detail::read_int(reply, i);
    if (!y) continue;
    while (i < reply.size() && reply[i] == ' ') ++i;
    if (i < reply.size() && reply[i] == ')') return Point{static_cast<int>(*x), static_cast<int>(*y)};
  }
  return std::nullopt;
}

inline PointResult ground_general(const std::string& description, const Observation& o, ModelBackend& backend,
                                  const GroundingConfig& cfg = {}) {
  if (detail::trim(description).empty()) fail(ErrorCode::Precondition, "grounding needs a non-empty description");
  ModelRequest req;
  req.temperature = cfg.temperature;
  req.session = cfg.session;
  req.messages.push_back({"user",
                          {Part::of_text(prompts::fill_template(prompts::kGrounding, {{"DESCRIPTION", description}})),
                           Part::of_image(o, "latest")}});
  const auto resp = backend.chat(req);
  PointResult res{{}, usage_of(resp), false};
  if (detail::declines(resp.text)) fail(ErrorCode::GroundingRefused, "no element matches '" + description + "'");
  const auto p = parse_point(resp.text);
  if (!p) fail(ErrorCode::GroundingRefused, "grounding reply has no (x, y): " + resp.text);
  const int w = o.image().width(), h = o.image().height();
  res.point = {std::clamp(p->x, 0, w - 1), std::clamp(p->y, 0, h - 1)};
  if (!(res.point == *p)) {
    res.clamped = true;
    log::warn("grounding point (" + std::to_string(p->x) + ", " + std::to_string(p->y) + ") clamped to (" +
              std::to_string(res.point.x) + ", " + std::to_string(res.point.y) + ")");
  }
  return res;
}

inline std::string render_ocr_table(const OcrTable& t) {
  std::string out;
  for (const auto& r : t.rows)
    out += std::to_string(r.id) + "\t" + r.text + "\t" + std::to_string(r.x1) + "," + std::to_string(r.y1) + "," +
           std::to_string(r.x2) + "," + std::to_string(r.y2) + "\n";
  return out;
}

// Start of a word is the middle of its left edge, end the middle of its right.
inline Point ocr_anchor(const OcrRow& r, CursorPosition pos) {
  const int y = (r.y1 + r.y2) / 2;
  return {pos == CursorPosition::start ? r.x1 : r.x2, y};
}

inline PointResult ground_ocr(const Observation& o, const std::string& phrase, CursorPosition pos,
                              const OcrTable& table, ModelBackend& backend, const GroundingConfig& cfg = {}) {
  if (detail::trim(phrase).empty()) fail(ErrorCode::Precondition, "OCR grounding needs a non-empty phrase");
  if (table.rows.empty()) fail(ErrorCode::PhraseNotFound, "OCR table is empty");
  ModelRequest req;
  req.temperature = cfg.temperature;
  req.session = cfg.session;
  req.messages.push_back(
      {"user",
       {Part::of_text(prompts::fill_template(
            prompts::kOcrSelection, {{"TABLE", render_ocr_table(table)},
                                     {"PHRASE", phrase},
                                     {"POSITION", pos == CursorPosition::start ? "first" : "last"}})),
        Part::of_image(o, "latest")}});
  const auto resp = backend.chat(req);
  PointResult res{{}, usage_of(resp), false};
  if (detail::declines(resp.text)) fail(ErrorCode::PhraseNotFound, "'" + phrase + "' is not on screen");
  const auto t = detail::trim(resp.text);
  std::size_t i = 0;
  while (i < t.size() && !std::isdigit(static_cast<unsigned char>(t[i])) && t[i] != '-') ++i;
  const auto id = detail::read_int(t, i);
  if (!id) fail(ErrorCode::AmbiguousSelection, "OCR selection reply has no id: " + std::string(t));
  const auto* row = table.find(static_cast<int>(*id));
  if (!row) fail(ErrorCode::AmbiguousSelection, "OCR selection " + std::to_string(*id) + " is not in the table");
  const auto p = ocr_anchor(*row, pos);
  res.point = {std::clamp(p.x, 0, o.image().width() - 1), std::clamp(p.y, 0, o.image().height() - 1)};
  res.clamped = !(res.point == p);
  return res;
}

struct GroundingOutcome {
  GroundedAction grounded;
  TokenUsage tokens;
};

// Routes by the action's grounding category.
inline GroundingOutcome ground_action(const Action& action, const Observation& o, Environment& env,
                                      ModelBackend& grounder, const GroundingConfig& cfg = {}) {
  GroundingOutcome out{{action, {}}, {}};
  auto general = [&](const std::string& desc) {
    auto r = ground_general(desc, o, grounder, cfg);
    out.tokens += r.tokens;
    out.grounded.coordinates.push_back(r.point);
  };
  std::optional<OcrTable> table;
  auto ocr = [&](const std::string& phrase, CursorPosition pos) {
    if (!table) table = env.ocr();
    auto r = ground_ocr(o, phrase, pos, *table, grounder, cfg);
    out.tokens += r.tokens;
    out.grounded.coordinates.push_back(r.point);
  };
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, act::Click> || std::is_same_v<T, act::Type> ||
                      std::is_same_v<T, act::Scroll>) {
          general(a.desc);
        } else if constexpr (std::is_same_v<T, act::DragAndDrop>) {
          general(a.start_desc);
          general(a.end_desc);
        } else if constexpr (std::is_same_v<T, act::HighlightTextSpan>) {
          ocr(a.start_phrase, CursorPosition::start);
          ocr(a.end_phrase, CursorPosition::end);
        } else if constexpr (std::is_same_v<T, act::LocateCursor>) {
          ocr(a.phrase, a.pos);
        } else if constexpr (std::is_same_v<T, act::Hotkey> || std::is_same_v<T, act::HoldAndPress> ||
                             std::is_same_v<T, act::Open> || std::is_same_v<T, act::Wait>) {
        } else {
          fail(ErrorCode::Precondition, std::string(name_of(kind_of(action))) + " is not grounded");
        }
      },
      action);
  return out;
}

inline bool is_grounding_error(ErrorCode c) {
  return c == ErrorCode::GroundingRefused || c == ErrorCode::PhraseNotFound || c == ErrorCode::AmbiguousSelection ||
         c == ErrorCode::UnsupportedCapability;
}

// ---------------------------------------------------------------------------
// Searcher

struct SearcherConfig {
  int step_budget = 15;
  double temperature = 0.1;
  std::string os = "Ubuntu";
  GroundingConfig grounding{0.0, "searcher-grounder"};
};

inline ActionKindSet searcher_gui_actions() {
  return {ActionKind::click, ActionKind::type, ActionKind::scroll, ActionKind::hotkey};
}

inline std::string searcher_action_api() {
  return prompts::action_api(searcher_gui_actions()) +
         "agent.save_to_tutorial_notes(text)  # keep a tutorial step or the source URL\n"
         "agent.done(tutorial)  # finish with the complete step-by-step tutorial\n"
         "agent.fail(hint)  # give up and say why no tutorial was found\n";
}

struct SearcherMove {
  enum class Kind { gui, note, done, fail };
  Kind kind = Kind::gui;
  Action action = act::Wait{};
  std::string text;  // note, tutorial or hint
  std::string call;  // the call as emitted, for the log
};

namespace detail {

inline CallExpr first_call(std::string_view reply) {
  const auto t = trim(reply);
  std::vector<std::string> candidates;
  if (t.find("```") == std::string_view::npos) {
    if (t.substr(0, 6) != "agent.") fail(ErrorCode::NoActionBlock, "reply has no fenced action block");
    candidates.emplace_back(t);
  } else {
    for (auto& b : fenced_blocks(reply))
      if (b.body.find("agent.") != std::string::npos) candidates.push_back(b.body);
  }
  for (const auto& c : candidates) {
    auto calls = parse_calls(c);
    if (calls.empty()) continue;
    if (calls.size() > 1) log::warn("several actions in one reply; using agent." + calls.front().name);
    return calls.front();
  }
  fail(ErrorCode::NoActionBlock, "no agent call found");
}

}  // namespace detail

// The Searcher's own grammar: GUI navigation plus note taking and its own
// done/fail, which carry the tutorial and the hint.
inline SearcherMove parse_searcher_move(std::string_view reply) {
  const auto call = detail::first_call(reply);
  SearcherMove m;
  m.call = "agent." + call.name + "(...)";
  if (call.name == "save_to_tutorial_notes") {
    detail::Binder b(call, {{"text", "note", true}});
    m.kind = SearcherMove::Kind::note;
    m.text = b.str(0);
    return m;
  }
  if (call.name == "done") {
    detail::Binder b(call, {{"tutorial", "text", false}});
    m.kind = SearcherMove::Kind::done;
    m.text = b.str(0);
    return m;
  }
  if (call.name == "fail") {
    detail::Binder b(call, {{"hint", "reason", false}});
    m.kind = SearcherMove::Kind::fail;
    m.text = b.str(0);
    return m;
  }
  m.action = action_from_call(call);
  const auto violations = validate(m.action, searcher_gui_actions());
  if (!violations.empty()) fail(violations.front().code, violations.front().message);
  m.call = format_action(m.action);
  return m;
}

struct SearchOutcome {
  bool done = false;
  Tutorial tutorial;
  std::string hint;
  ToolRecord record;
  TokenLedger tokens;
};

namespace detail {

inline std::vector<std::string> nonempty_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    if (!line.empty()) out.emplace_back(line);
    pos = nl + 1;
  }
  return out;
}

inline std::vector<std::string> urls_in(const std::vector<std::string>& texts) {
  std::vector<std::string> out;
  for (const auto& t : texts) {
    for (std::size_t at = t.find("http"); at != std::string::npos; at = t.find("http", at + 1)) {
      if (t.compare(at, 7, "http://") != 0 && t.compare(at, 8, "https://") != 0) continue;
      auto end = at;
      while (end < t.size() && !std::isspace(static_cast<unsigned char>(t[end])) && t[end] != ')' && t[end] != ',')
        ++end;
      auto url = t.substr(at, end - at);
      if (std::find(out.begin(), out.end(), url) == out.end()) out.push_back(url);
    }
  }
  return out;
}

inline std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return trim_copy(s);
}

}  // namespace detail

inline SearchOutcome search(const std::string& query, const Observation& main_screen, const SandboxFactory& sandboxes,
                            ModelBackend& backend, ModelBackend& grounder, const SearcherConfig& cfg = {}) {
  SearchOutcome out;
  out.record.agent = "searcher";
  auto finish_fail = [&](std::string outcome, std::string hint) {
    out.done = false;
    out.hint = detail::one_line(std::move(hint));
    out.record.outcome = std::move(outcome);
    out.record.result = "FAIL: " + out.hint;
    return out;
  };
  EnvironmentPtr sandbox;
  try {
    if (!sandboxes) fail(ErrorCode::UnsupportedCapability, "no search sandbox configured");
    sandbox = sandboxes(query);
  } catch (const Error& e) {
    return finish_fail("fail", std::string("search sandbox unavailable: ") + e.what());
  }
  out.record.environment_id = sandbox->id();

  std::vector<std::string> notes;
  std::string feedback;
  for (int turn = 1; turn <= cfg.step_budget; ++turn) {
    Observation shot;
    try {
      shot = sandbox->observe();
    } catch (const Error& e) {
      return finish_fail("fail", std::string("search sandbox error: ") + e.what());
    }
    std::string noted;
    for (const auto& n : notes) noted += "- " + n + "\n";
    ModelRequest req;
    req.temperature = cfg.temperature;
    req.session = "searcher";
    req.messages.push_back({"system",
                            {Part::of_text(prompts::fill_template(
                                prompts::kSearcher, {{"QUERY", query},
                                                     {"CURRENT_OS", cfg.os},
                                                     {"TUTORIAL_PLACEHOLDER", noted.empty() ? "(none yet)" : noted},
                                                     {"ACTION_API", searcher_action_api()}}))}});
    std::string history;
    for (const auto& t : out.record.turns)
      history += "Turn " + std::to_string(t.turn) + ": " + t.action + " -> " + t.observation + "\n";
    Message user{"user", {Part::of_text("Screenshot of the main agent's current screen:"),
                          Part::of_image(main_screen, "main")}};
    if (!history.empty()) user.parts.push_back(Part::of_text("Previous turns:\n" + history));
    if (!feedback.empty()) user.parts.push_back(Part::of_text(feedback));
    user.parts.push_back(Part::of_text("Current browser screenshot:"));
    user.parts.push_back(Part::of_image(shot, "latest"));
    req.messages.push_back(std::move(user));
    feedback.clear();

    const auto resp = backend.chat(req);
    out.tokens["searcher"] += usage_of(resp);
    ToolTurn record{turn, {}, {}, {}};

    SearcherMove move;
    try {
      move = parse_searcher_move(resp.text);
    } catch (const Error& e) {
      record.action = detail::one_line(std::string(resp.text.substr(0, 200)));
      record.observation = std::string("rejected: ") + e.what();
      record.warnings.push_back(record.observation);
      feedback = std::string(prompts::kSearcherReminder) + " (" + e.what() + ")";
      out.record.turns.push_back(std::move(record));
      continue;
    }
    record.action = move.call;
    using K = SearcherMove::Kind;
    if (move.kind == K::note) {
      notes.push_back(move.text);
      record.observation = "saved to tutorial notes";
      out.record.turns.push_back(std::move(record));
      continue;
    }
    if (move.kind == K::fail) {
      record.observation = "search failed";
      out.record.turns.push_back(std::move(record));
      return finish_fail("fail", move.text.empty() ? "no reliable tutorial found" : move.text);
    }
    if (move.kind == K::done) {
      auto steps = detail::nonempty_lines(move.text);
      if (steps.empty())
        for (const auto& n : notes)
          if (detail::urls_in({n}).empty() || n.find(' ') != std::string::npos) steps.push_back(n);
      if (steps.empty()) {
        record.observation = "rejected: done needs a non-empty tutorial";
        record.warnings.push_back(record.observation);
        feedback = "agent.done needs the tutorial text; save notes or pass tutorial=...";
        out.record.turns.push_back(std::move(record));
        continue;
      }
      auto sources = notes;
      sources.push_back(move.text);
      out.done = true;
      out.tutorial = {std::move(steps), detail::urls_in(sources), query};
      out.record.outcome = "done";
      out.record.result = "DONE: tutorial with " + std::to_string(out.tutorial.steps.size()) + " steps";
      record.observation = "tutorial returned";
      out.record.turns.push_back(std::move(record));
      return out;
    }
    try {
      auto g = ground_action(move.action, shot, *sandbox, grounder, cfg.grounding);
      out.tokens["grounder"] += g.tokens;
      sandbox->execute(g.grounded);
      record.observation = "executed";
    } catch (const Error& e) {
      if (is_grounding_error(e.code()) && e.code() != ErrorCode::UnsupportedCapability) {
        record.observation = std::string("grounding failed: ") + e.what();
        out.record.turns.push_back(std::move(record));
        continue;
      }
      record.observation = std::string("sandbox error: ") + e.what();
      out.record.turns.push_back(std::move(record));
      return finish_fail("fail", std::string("search sandbox error: ") + e.what());
    }
    out.record.turns.push_back(std::move(record));
  }
  return finish_fail("budget_exhausted", "budget exhausted");
}

// ---------------------------------------------------------------------------
// Coder

struct CoderConfig {
  int budget = 20;
  std::size_t output_limit = 8192;
  double temperature = 0.1;
  std::string os = "Ubuntu";
};

enum class CodeStatus { done, fail, budget_exhausted };

inline std::string_view to_string(CodeStatus s) {
  switch (s) {
    case CodeStatus::done: return "done";
    case CodeStatus::fail: return "fail";
    case CodeStatus::budget_exhausted: return "budget_exhausted";
  }
  return "fail";
}

struct CodeOutcome {
  CodeStatus status = CodeStatus::fail;
  std::string synopsis;
  std::string verification;
  std::string reason;
  std::string partial_log;
  ToolRecord record;
  TokenLedger tokens;
};

// Keeps the head and tail when the text exceeds the limit.
inline std::string truncate_middle(const std::string& s, std::size_t limit) {
  if (s.size() <= limit) return s;
  const auto head = limit / 2, tail = limit - head;
  return s.substr(0, head) + "\n...[" + std::to_string(s.size() - limit) + " bytes truncated]...\n" +
         s.substr(s.size() - tail);
}

struct CoderMove {
  enum class Kind { python, bash, done, fail, none };
  Kind kind = Kind::none;
  std::string code;
  std::vector<std::string> warnings;
};

inline CoderMove parse_coder_move(std::string_view reply) {
  CoderMove m;
  int found = 0;
  for (const auto& b : fenced_blocks(reply)) {
    const auto lang = detail::lower(b.lang);
    const auto body = detail::trim_copy(b.body);
    auto kind = CoderMove::Kind::none;
    if (lang == "python" || lang == "py" || lang == "python3")
      kind = CoderMove::Kind::python;
    else if (lang == "bash" || lang == "sh" || lang == "shell" || lang == "powershell")
      kind = CoderMove::Kind::bash;
    else if (detail::lower(body) == "done")
      kind = CoderMove::Kind::done;
    else if (detail::lower(body) == "fail")
      kind = CoderMove::Kind::fail;
    if (kind == CoderMove::Kind::none) continue;
    if (found++ == 0) {
      m.kind = kind;
      m.code = body;
    }
  }
  if (found > 1) {
    m.warnings.push_back("reply has " + std::to_string(found) + " executable blocks; only the first ran");
    log::warn(m.warnings.back());
  }
  return m;
}

namespace detail {

inline std::string thought_of(std::string_view reply) {
  auto t = reply;
  const auto low = lower(t);
  if (auto a = low.find("(answer)"); a != std::string::npos) t = t.substr(0, a);
  if (auto th = lower(t).find("(thought)"); th != std::string::npos) t = t.substr(th + 9);
  return one_line(std::string(t));
}

// "synopsis: ..." and "verification: ..." sections of the summary reply.
inline std::pair<std::string, std::string> synopsis_sections(std::string_view text) {
  const auto low = lower(text);
  const auto s = low.find("synopsis:");
  const auto v = low.find("verification:");
  auto cut = [&](std::size_t from, std::size_t len, std::size_t to) {
    return from == std::string::npos ? std::string{} : trim_copy(text.substr(from + len, to - from - len));
  };
  std::string synopsis, verification;
  if (s != std::string::npos) synopsis = cut(s, 9, v != std::string::npos && v > s ? v : text.size());
  if (v != std::string::npos) verification = cut(v, 13, s != std::string::npos && s > v ? s : text.size());
  return {synopsis, verification};
}

}  // namespace detail

inline CodeOutcome code_task(const std::string& subtask, Environment& env, const Observation& screen,
                             ModelBackend& backend, const CoderConfig& cfg = {}) {
  CodeOutcome out;
  out.record.agent = "coder";
  out.record.environment_id = env.id();
  auto finish = [&](CodeStatus st, std::string result) {
    out.status = st;
    out.record.outcome = std::string(to_string(st));
    out.record.result = std::move(result);
    return out;
  };
  if (!env.capabilities().command_channel) {
    out.reason = "environment has no command channel";
    return finish(CodeStatus::fail, "FAIL: " + out.reason);
  }
  const std::string platform =
      "Platform: " + cfg.os + ". Bash commands run in a shell on the task machine; Python code runs with python3.";
  std::string log_text;
  for (int turn = 1; turn <= cfg.budget; ++turn) {
    ModelRequest req;
    req.temperature = cfg.temperature;
    req.session = "coder";
    req.messages.push_back({"system", {Part::of_text(prompts::fill_template(
                                          prompts::kCoder, {{"platform_text", platform}, {"SUBTASK", subtask}}))}});
    req.messages.push_back({"user",
                            {Part::of_text("Current screenshot:"), Part::of_image(screen, "latest"),
                             Part::of_text("Execution log so far:\n" + (log_text.empty() ? "(nothing yet)" : log_text) +
                                           "\nTurns used: " + std::to_string(turn - 1) + " of " +
                                           std::to_string(cfg.budget))}});
    const auto resp = backend.chat(req);
    out.tokens["coder"] += usage_of(resp);
    auto move = parse_coder_move(resp.text);
    ToolTurn record{turn, {}, {}, move.warnings};
    using K = CoderMove::Kind;
    if (move.kind == K::none) {
      record.action = "(no block)";
      record.observation = "no executable block found; reply with exactly one fenced block";
      log_text += "Turn " + std::to_string(turn) + ": " + record.observation + "\n";
      out.record.turns.push_back(std::move(record));
      continue;
    }
    if (move.kind == K::fail) {
      record.action = "FAIL";
      out.record.turns.push_back(std::move(record));
      out.reason = detail::thought_of(resp.text);
      if (out.reason.empty()) out.reason = "code agent reported FAIL";
      return finish(CodeStatus::fail, "FAIL: " + out.reason);
    }
    if (move.kind == K::done) {
      record.action = "DONE";
      out.record.turns.push_back(std::move(record));
      ModelRequest sreq;
      sreq.temperature = cfg.temperature;
      sreq.session = "coder";
      sreq.messages.push_back({"user", {Part::of_text(prompts::fill_template(
                                           prompts::kCoderSummary, {{"SUBTASK", subtask}, {"LOG", log_text}}))}});
      const auto sresp = backend.chat(sreq);
      out.tokens["coder"] += usage_of(sresp);
      auto [synopsis, verification] = detail::synopsis_sections(sresp.text);
      if (synopsis.empty()) synopsis = detail::trim_copy(sresp.text);
      if (verification.empty()) {
        verification = "Open the files the code agent touched and check the changes on screen.";
        log::warn("code summary had no verification section");
      }
      out.synopsis = synopsis;
      out.verification = verification;
      return finish(CodeStatus::done, "DONE: " + detail::one_line(synopsis) +
                                          " Verification: " + detail::one_line(verification));
    }
    const std::string lang = move.kind == K::python ? "python" : "bash";
    record.action = lang + ":\n" + move.code;
    CommandResult r;
    try {
      r = env.command({lang, move.code});
    } catch (const Error& e) {
      record.observation = std::string("command channel error: ") + e.what();
      out.record.turns.push_back(std::move(record));
      out.reason = std::string("command channel lost: ") + e.what();
      out.partial_log = log_text;
      return finish(CodeStatus::fail, "FAIL: " + out.reason);
    }
    std::string fed = "exit code " + std::to_string(r.exit_code) + "\nstdout:\n" +
                      truncate_middle(r.stdout_text, cfg.output_limit) + "\nstderr:\n" +
                      truncate_middle(r.stderr_text, cfg.output_limit);
    record.observation = fed;
    log_text += "Turn " + std::to_string(turn) + " (" + lang + "):\n" + move.code + "\n" + fed + "\n";
    out.record.turns.push_back(std::move(record));
  }
  out.partial_log = log_text;
  out.reason = "budget exhausted";
  return finish(CodeStatus::budget_exhausted, "BUDGET_EXHAUSTED after " + std::to_string(cfg.budget) + " turns");
}

}  // namespace symphony
