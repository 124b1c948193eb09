#pragma once

// Reflection-memory agent: per-step summaries with a zoomed crop of the
// action area, trajectory-level reflection over milestone-gated memory, and
// the parser for the reflection protocol.

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "json.hpp"
#include "symphony/actions.hpp"
#include "symphony/backends/model.hpp"
#include "symphony/image.hpp"
#include "symphony/log.hpp"
#include "symphony/observation.hpp"
#include "symphony/prompts.hpp"
#include "symphony/protocol.hpp"
#include "symphony/trajectory.hpp"

namespace symphony {

struct RmaConfig {
  int crop_radius = 400;
  int marker_radius = 12;
  std::size_t max_images = 8;  // milestone screenshots + the latest one
  double temperature = 0.1;
};

inline TokenUsage usage_of(const ModelResponse& r) { return {r.prompt_tokens, r.completion_tokens, r.estimated}; }

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool istarts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == lower(prefix);
}

inline std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

// Drops sentence punctuation between a recognised prefix and the text.
inline std::string after_prefix(std::string_view s, std::size_t n) {
  s.remove_prefix(std::min(n, s.size()));
  while (!s.empty() && (s.front() == '.' || s.front() == ':' || s.front() == ',' || s.front() == '!' ||
                        std::isspace(static_cast<unsigned char>(s.front()))))
    s.remove_prefix(1);
  return trim_copy(s);
}

inline void retry_turn(ModelRequest& req, const std::string& bad_reply, std::string_view reminder) {
  req.messages.push_back({"assistant", {Part::of_text(bad_reply)}});
  req.messages.push_back({"user", {Part::of_text(std::string(reminder))}});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Zoom crop

struct ZoomCrop {
  Observation image;
  Point center;  // in screenshot coordinates
  int radius = 0;
  int x0 = 0, y0 = 0;  // crop origin in screenshot coordinates
};

inline constexpr Rgb kMarkerColor{255, 0, 0};

// Square window [x-r, x+r) x [y-r, y+r) clipped to the image, with a filled
// red disc on the action point.
inline ZoomCrop zoom_crop(const Observation& o, Point p, int radius = 400, int marker_radius = 12) {
  const auto& img = o.image();
  if (p.x < 0 || p.y < 0 || p.x >= img.width() || p.y >= img.height())
    fail(ErrorCode::PointOutOfBounds,
         "crop center (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") is outside the screenshot");
  if (radius <= 0) fail(ErrorCode::Precondition, "crop radius must be positive");
  const int x0 = std::max(0, p.x - radius), y0 = std::max(0, p.y - radius);
  const int x1 = std::min(img.width(), p.x + radius), y1 = std::min(img.height(), p.y + radius);
  Image out = img.crop(x0, y0, x1, y1);
  const int cx = p.x - x0, cy = p.y - y0;
  for (int y = std::max(0, cy - marker_radius); y <= std::min(out.height() - 1, cy + marker_radius); ++y)
    for (int x = std::max(0, cx - marker_radius); x <= std::min(out.width() - 1, cx + marker_radius); ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= marker_radius * marker_radius) out.set(x, y, kMarkerColor);
  return {Observation(std::move(out)), p, radius, x0, y0};
}

// ---------------------------------------------------------------------------
// Step summary

// Accepts "summary: ...\nsuccess: true" and the one-line
// "summary: ...; success: false" form.
inline StepSummary parse_step_summary(std::string_view text) {
  const auto low = detail::lower(text);
  const auto at = low.find("success:");
  if (at == std::string::npos) fail(ErrorCode::UnparseableVerdict, "no 'success:' verdict in step summary");
  std::size_t v = at + 8;
  while (v < low.size() && std::isspace(static_cast<unsigned char>(low[v]))) ++v;
  std::size_t e = v;
  while (e < low.size() && std::isalpha(static_cast<unsigned char>(low[e]))) ++e;
  const auto word = low.substr(v, e - v);
  StepSummary out;
  if (word == "true" || word == "yes")
    out.success = true;
  else if (word == "false" || word == "no")
    out.success = false;
  else
    fail(ErrorCode::UnparseableVerdict, "verdict is neither true nor false: '" + word + "'");

  const auto m = low.find("summary:");
  std::string_view body;
  if (m != std::string::npos) {
    auto end = m < at ? at : low.find('\n', m);
    if (end == std::string::npos) end = low.size();
    body = text.substr(m + 8, end - m - 8);
  } else {
    body = text.substr(0, at);
  }
  auto s = detail::trim_copy(body);
  while (!s.empty() && (s.back() == ';' || s.back() == ',')) s.pop_back();
  out.text = s.empty() ? "(no summary given)" : detail::trim_copy(s);
  return out;
}

struct SummaryResult {
  StepSummary summary;
  TokenUsage tokens;
  int attempts = 0;
  bool defaulted = false;  // verdict missing twice, success assumed
  ModelRequest request;    // first attempt, for inspection
};

// o_{i-1} and o_i go in whole; only the pre-action screenshot gets a crop.
inline SummaryResult summarize_step(const std::string& previous_output, const Observation& before,
                                    const Observation& after, const std::optional<ZoomCrop>& crop,
                                    ModelBackend& backend, const RmaConfig& cfg = {},
                                    const std::string& session = "summarizer") {
  ModelRequest req;
  req.temperature = cfg.temperature;
  req.session = session;
  const std::string crop_note =
      crop ? ", and a zoomed crop of the screenshot before the action; the red marker shows where the action landed"
           : "";
  req.messages.push_back(
      {"system",
       {Part::of_text(prompts::fill_template(prompts::kStepSummary,
                                             {{"previous_output", previous_output}, {"crop_note", crop_note}}))}});
  Message user{"user",
               {Part::of_text("Screenshot before the action:"), Part::of_image(before, "before"),
                Part::of_text("Screenshot after the action:"), Part::of_image(after, "after")}};
  if (crop) {
    user.parts.push_back(Part::of_text("Zoomed crop around the action point:"));
    user.parts.push_back(Part::of_image(crop->image, "crop"));
  }
  req.messages.push_back(std::move(user));

  SummaryResult res;
  res.request = req;
  std::string last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto resp = backend.chat(req);
    res.tokens += usage_of(resp);
    ++res.attempts;
    try {
      res.summary = parse_step_summary(resp.text);
      return res;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableVerdict) throw;
      last = resp.text;
      detail::retry_turn(req, resp.text, prompts::kStepSummaryReminder);
    }
  }
  log::warn("step summary verdict missing after retry; assuming success");
  res.defaulted = true;
  res.summary = {detail::trim_copy(last).empty() ? "(no summary given)" : detail::trim_copy(last), true};
  return res;
}

// ---------------------------------------------------------------------------
// Hints

inline constexpr std::string_view kGuiFailureHint = "[AUTO] previous GUI action judged unsuccessful";
inline constexpr std::string_view kCoderPendingHint =
    "[AUTO] code agent reported completion; its changes have not been checked in the GUI yet";

inline std::string loop_hint(const LoopMatch& m) {
  return "[AUTO] loop detected: steps " + std::to_string(m.historical_start) + ".." +
         std::to_string(m.historical_start + m.length - 1) + " ≡ last " + std::to_string(m.length) + " steps";
}

inline std::string build_hints(const AuxiliarySignals& s) {
  std::vector<std::string> lines;
  if (s.gui_failure.value_or(false)) lines.emplace_back(kGuiFailureHint);
  if (s.loop) lines.push_back(loop_hint(*s.loop));
  if (s.coder_pending_verification) lines.emplace_back(kCoderPendingHint);
  std::string out;
  for (const auto& l : lines) out += (out.empty() ? "" : "\n") + l;
  return out;
}

// ---------------------------------------------------------------------------
// Reflection protocol

inline constexpr std::string_view kOffTrackPrefix = "The trajectory is not going according to plan.";
inline constexpr std::string_view kOnTrackPrefix = "You are on track";
inline constexpr std::string_view kCompletedPrefix = "Task Completed";
inline constexpr std::string_view kInfeasiblePrefix = "Task Infeasible";

inline std::string_view error_label(OffTrackError e) {
  switch (e) {
    case OffTrackError::GUIError: return "GUI Operation Error";
    case OffTrackError::LackOfTutorial: return "Lack of Tutorial";
    case OffTrackError::CodeError: return "Code Error";
    case OffTrackError::OtherError: return "Other Error";
  }
  return "Other Error";
}

namespace detail {

struct LabelMatch {
  OffTrackError error;
  std::size_t length;  // label plus the colon
};

// "<label>:" at the start of s.
inline std::optional<LabelMatch> leading_label(std::string_view s) {
  static const std::vector<std::pair<std::string_view, OffTrackError>> labels = {
      {"GUI Operation Error", OffTrackError::GUIError},
      {"GUI Error", OffTrackError::GUIError},
      {"Lack of Tutorial", OffTrackError::LackOfTutorial},
      {"Code Error", OffTrackError::CodeError},
      {"Other Error", OffTrackError::OtherError},
  };
  for (const auto& [label, err] : labels) {
    if (!istarts_with(s, label)) continue;
    auto rest = s.substr(label.size());
    std::size_t i = 0;
    while (i < rest.size() && rest[i] == ' ') ++i;
    if (i < rest.size() && rest[i] == ':') return LabelMatch{err, label.size() + i + 1};
  }
  return std::nullopt;
}

inline bool mentions_label(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (leading_label(s.substr(i))) return true;
  return false;
}

}  // namespace detail

// Maps the reflection sentence onto the four protocol cases.
inline ReflectionMessage classify_reflection(std::string_view text,
                                             std::optional<std::string> recalled = std::nullopt) {
  const auto r = detail::trim(text);
  using S = ReflectionState;
  if (detail::istarts_with(r, kOffTrackPrefix)) {
    const auto rest = detail::trim(r.substr(kOffTrackPrefix.size()));
    const auto label = detail::leading_label(rest);
    if (!label) fail(ErrorCode::InconsistentVerdict, "off-track reflection names no known error type");
    return {S::OffTrack, label->error, detail::trim_copy(rest.substr(label->length)), std::move(recalled)};
  }
  if (const auto label = detail::leading_label(r))
    return {S::OffTrack, label->error, detail::trim_copy(r.substr(label->length)), std::move(recalled)};
  if (detail::istarts_with(r, kOnTrackPrefix)) {
    auto rest = detail::after_prefix(r, kOnTrackPrefix.size());
    if (detail::mentions_label(rest))
      fail(ErrorCode::InconsistentVerdict, "on-track reflection carries an error type");
    return {S::OnTrack, std::nullopt, rest.empty() ? std::string(r) : rest, std::move(recalled)};
  }
  for (auto [prefix, state] : {std::pair{kCompletedPrefix, S::Completed}, {std::string_view("The task is completed"), S::Completed},
                               {std::string_view("The task has been completed"), S::Completed},
                               {kInfeasiblePrefix, S::Infeasible}, {std::string_view("The task is infeasible"), S::Infeasible},
                               {std::string_view("The task cannot be completed"), S::Infeasible}}) {
    if (!detail::istarts_with(r, prefix)) continue;
    if (detail::mentions_label(r))
      fail(ErrorCode::InconsistentVerdict, std::string(to_string(state)) + " reflection carries an error type");
    auto rest = detail::after_prefix(r, prefix.size());
    return {state, std::nullopt, rest.empty() ? std::string(r) : rest, std::move(recalled)};
  }
  fail(ErrorCode::ProtocolParseError, "reflection matches none of the four cases: " + std::string(r.substr(0, 80)));
}

// Canonical sentence for a message; classify_reflection inverts it.
inline std::string format_reflection(const ReflectionMessage& m) {
  switch (m.state()) {
    case ReflectionState::OffTrack:
      return std::string(kOffTrackPrefix) + " " + std::string(error_label(*m.error_type())) + ": " + m.explanation();
    case ReflectionState::OnTrack: return std::string(kOnTrackPrefix) + ". " + m.explanation();
    case ReflectionState::Completed: return std::string(kCompletedPrefix) + ". " + m.explanation();
    case ReflectionState::Infeasible: return std::string(kInfeasiblePrefix) + ". " + m.explanation();
  }
  return m.explanation();
}

// Answer block: {"reflection": str, "knowledge": str, "is_milestone": bool},
// optionally "recalled_knowledge": str. The last parseable JSON fence wins.
inline RmaVerdict parse_reflection(std::string_view text) {
  using nlohmann::json;
  std::optional<json> answer;
  for (const auto& b : fenced_blocks(text)) {
    const auto body = detail::trim(b.body);
    if (b.lang != "json" && (body.empty() || body.front() != '{')) continue;
    try {
      auto j = json::parse(body);
      if (j.is_object()) answer = std::move(j);
    } catch (const json::exception&) {
    }
  }
  if (!answer) fail(ErrorCode::ProtocolParseError, "no fenced JSON answer block");
  const auto& j = *answer;
  if (!j.contains("reflection") || !j["reflection"].is_string() || j["reflection"].get<std::string>().empty())
    fail(ErrorCode::ProtocolParseError, "answer block lacks a 'reflection' string");

  bool milestone = false;
  if (j.contains("is_milestone")) {
    const auto& m = j["is_milestone"];
    if (m.is_boolean())
      milestone = m.get<bool>();
    else if (m.is_string() && (m == "true" || m == "false"))
      milestone = m == "true";
    else
      fail(ErrorCode::ProtocolParseError, "'is_milestone' must be a boolean");
  }

  std::optional<std::string> knowledge;
  if (j.contains("knowledge")) {
    const auto& k = j["knowledge"];
    std::string s;
    if (k.is_string()) {
      s = k.get<std::string>();
    } else if (k.is_array()) {
      for (const auto& item : k)
        if (item.is_string()) s += (s.empty() ? "" : "\n") + item.get<std::string>();
    } else if (!k.is_null()) {
      fail(ErrorCode::ProtocolParseError, "'knowledge' must be a string");
    }
    s = detail::trim_copy(s);
    if (!s.empty()) knowledge = s;
  }
  std::optional<std::string> recalled;
  if (j.contains("recalled_knowledge") && j["recalled_knowledge"].is_string() &&
      !j["recalled_knowledge"].get<std::string>().empty())
    recalled = j["recalled_knowledge"].get<std::string>();

  return {classify_reflection(j["reflection"].get<std::string>(), std::move(recalled)), milestone,
          std::move(knowledge)};
}

// Phrases that read as instructions for the next move. The reflection is
// meant to diagnose, not plan.
inline std::vector<std::string> future_plan_lint(std::string_view reflection) {
  static const std::vector<std::string> patterns = {
      "you should",  "you need to", "you must",     "next step",  "next action", "next, ",
      "i suggest",   "try clicking", "try to ",     "please ",    "click on",    "then click",
      "then press",  "then type",   "go ahead and", "your plan should"};
  const auto low = detail::lower(reflection);
  std::vector<std::string> hits;
  for (const auto& p : patterns)
    if (low.find(p) != std::string::npos) hits.push_back(p);
  return hits;
}

// ---------------------------------------------------------------------------
// Reflection

struct ReflectInput {
  std::string instruction;
  LongTermMemory memory;
  std::string latest_output;  // orchestrator output of the previous turn
  Observation latest;         // o_i
  AuxiliarySignals signals;
};

struct ReflectResult {
  RmaVerdict verdict;
  TokenUsage tokens;
  int attempts = 0;
  std::vector<int> image_steps;  // steps whose screenshot was attached
  std::vector<std::string> lint;
  bool knowledge_added = false;
  ModelRequest request;  // first attempt
};

// Indices into memory.entries whose screenshots are sent. With more
// milestones than room, the initial screenshot stays and the newest fill
// the rest.
inline std::vector<std::size_t> select_milestone_images(const LongTermMemory& mem, std::size_t max_history) {
  std::vector<std::size_t> with;
  for (std::size_t i = 0; i < mem.entries.size(); ++i)
    if (mem.entries[i].screenshot) with.push_back(i);
  if (with.size() <= max_history) return with;
  std::vector<std::size_t> out;
  if (max_history == 0) return out;
  const bool keep_first = mem.entries[with.front()].index == 0;
  if (keep_first) out.push_back(with.front());
  const std::size_t room = max_history - out.size();
  for (std::size_t i = with.size() - room; i < with.size(); ++i)
    if (!keep_first || i != 0) out.push_back(with[i]);
  return out;
}

inline ModelRequest build_reflection_request(const ReflectInput& in, const KnowledgeStore& store,
                                             const RmaConfig& cfg, std::vector<int>& image_steps,
                                             const std::string& session = "rma") {
  if (cfg.max_images < 1) fail(ErrorCode::ConfigError, "reflection needs room for the latest screenshot");
  const auto chosen = select_milestone_images(in.memory, cfg.max_images - 1);
  std::string history;
  for (std::size_t i = 0; i < in.memory.entries.size(); ++i) {
    const auto& e = in.memory.entries[i];
    history += "Step " + std::to_string(e.index) + ": " + e.summary;
    if (std::find(chosen.begin(), chosen.end(), i) != chosen.end())
      history += " [milestone screenshot attached]";
    else if (e.milestone)
      history += " [milestone]";
    history += "\n";
  }
  if (history.empty()) history = "(no previous steps)\n";
  const auto hints = build_hints(in.signals);
  const auto knowledge = store.recall();

  ModelRequest req;
  req.temperature = cfg.temperature;
  req.session = session;
  req.messages.push_back({"system", {Part::of_text(std::string(prompts::kReflection))}});
  Message user{"user",
               {Part::of_text(prompts::fill_template(
                   prompts::kReflectionInputs, {{"user_instruction", in.instruction},
                                                {"history", history},
                                                {"latest_agent_output", in.latest_output},
                                                {"existing_knowledge", knowledge.empty() ? "None" : knowledge},
                                                {"additional_hints", hints.empty() ? "None" : hints}}))}};
  image_steps.clear();
  for (auto i : chosen) {
    const auto& e = in.memory.entries[i];
    user.parts.push_back(Part::of_text("Milestone screenshot, step " + std::to_string(e.index) + ":"));
    user.parts.push_back(Part::of_image(*e.screenshot, "history"));
    image_steps.push_back(e.index);
  }
  user.parts.push_back(Part::of_text("latest_screenshot:"));
  user.parts.push_back(Part::of_image(in.latest, "latest"));
  req.messages.push_back(std::move(user));
  return req;
}

// One retry with a format reminder; new knowledge goes to the store.
inline ReflectResult reflect(const ReflectInput& in, KnowledgeStore& store, int step_index, ModelBackend& backend,
                             const RmaConfig& cfg = {}, const std::string& session = "rma") {
  std::vector<int> image_steps;
  auto req = build_reflection_request(in, store, cfg, image_steps, session);
  ModelRequest first = req;
  TokenUsage tokens;
  int attempts = 0;
  for (;;) {
    const auto resp = backend.chat(req);
    tokens += usage_of(resp);
    ++attempts;
    try {
      auto verdict = parse_reflection(resp.text);
      ReflectResult res{std::move(verdict), tokens, attempts, std::move(image_steps), {}, false, std::move(first)};
      res.lint = future_plan_lint(format_reflection(res.verdict.reflection));
      if (!res.lint.empty()) log::warn("reflection reads like a plan: '" + res.lint.front() + "'");
      if (res.verdict.knowledge) res.knowledge_added = store.add(*res.verdict.knowledge, step_index);
      return res;
    } catch (const Error& e) {
      const bool protocol = e.code() == ErrorCode::ProtocolParseError || e.code() == ErrorCode::InconsistentVerdict;
      if (!protocol || attempts >= 2) throw;
      log::warn(std::string("reflection unparseable, retrying: ") + e.what());
      detail::retry_turn(req, resp.text, prompts::kReflectionReminder);
    }
  }
}

}  // namespace symphony
