#pragma once

// Orchestrator: builds the compressed context (system prompt, tutorial, last
// K-1 steps, reflection, current screenshot) under the image budget and
// parses the four-section reply into a thought and an action.

#include <array>
#include <string>
#include <vector>

#include "symphony/actions.hpp"
#include "symphony/backends/model.hpp"
#include "symphony/prompts.hpp"
#include "symphony/rma.hpp"
#include "symphony/trajectory.hpp"

namespace symphony {

struct OrchestratorConfig {
  int K = 8;
  std::size_t max_images = 8;
  int max_steps = 15;
  double temperature = 0.1;
  ScreenGeometry image_resolution{1920, 1080};
  std::string os = "Ubuntu";

  void validate() const {
    if (K < 1) fail(ErrorCode::ConfigError, "K must be >= 1");
    if (max_images < 2) fail(ErrorCode::ConfigError, "max_images must be >= 2");
    if (max_steps < 1) fail(ErrorCode::ConfigError, "max_steps must be >= 1");
    if (temperature < 0.0) fail(ErrorCode::ConfigError, "temperature must be >= 0");
  }
};

struct AssembledContext {
  ModelRequest request;
  std::size_t history_texts = 0;
  std::size_t history_images = 0;
  bool has_tutorial = false;
  bool has_reflection = false;
  std::vector<std::string> image_hashes;  // every image in the request, in order

  std::size_t image_count() const { return request.image_count(); }
};

inline std::string render_step_for_context(const Step& s) {
  std::string out = "Step " + std::to_string(s.index) + ":\n";
  if (!s.thought.empty()) out += "Thought: " + s.thought + "\n";
  out += "Action: " + format_action(s.action) + "\n";
  if (s.summary) out += "Result: " + s.summary->text + "\n";
  if (!s.note.empty()) out += "Note: " + s.note + "\n";
  return out;
}

// History text is always kept; screenshots are attached newest-first until
// one slot is left for the current screenshot.
inline AssembledContext assemble_context(const Trajectory& traj, const std::optional<ReflectionMessage>& reflection,
                                         const Observation& current, const OrchestratorConfig& cfg,
                                         const std::string& session = "orchestrator") {
  cfg.validate();
  AssembledContext ctx;
  auto& req = ctx.request;
  req.temperature = cfg.temperature;
  req.session = session;
  req.messages.push_back(
      {"system",
       {Part::of_text(prompts::fill_template(prompts::kOrchestrator,
                                             {{"TASK_DESCRIPTION", traj.task_instruction()},
                                              {"CURRENT_OS", cfg.os},
                                              {"ACTION_API", prompts::action_api(ActionKindSet::all())}}))}});
  Message user{"user", {}};
  if (traj.tutorial()) {
    user.parts.push_back(Part::of_text("Tutorial found by the Searcher Agent:\n" + traj.tutorial()->render()));
    ctx.has_tutorial = true;
  }
  const auto window = short_term_window(traj, cfg.K);
  const std::size_t room = cfg.max_images - 1;
  const std::size_t first_with_image = window.size() > room ? window.size() - room : 0;
  if (!window.empty()) user.parts.push_back(Part::of_text("History of your previous interactions:"));
  for (std::size_t i = 0; i < window.size(); ++i) {
    const auto& s = window[i];
    user.parts.push_back(Part::of_text(render_step_for_context(s)));
    ++ctx.history_texts;
    if (i >= first_with_image && s.observation.valid()) {
      user.parts.push_back(Part::of_image(s.observation, "history"));
      ctx.image_hashes.push_back(s.observation.content_hash());
      ++ctx.history_images;
    }
  }
  if (reflection) {
    user.parts.push_back(Part::of_text("Reflection:\n" + format_reflection(*reflection)));
    ctx.has_reflection = true;
  }
  user.parts.push_back(Part::of_text("Current screenshot:"));
  user.parts.push_back(Part::of_image(current, "current"));
  ctx.image_hashes.push_back(current.content_hash());
  req.messages.push_back(std::move(user));
  return ctx;
}

// ---------------------------------------------------------------------------

struct DecisionSections {
  std::string verification;
  std::string analysis;
  std::string next_action;
  std::string grounded;
};

struct Decision {
  std::string thought;
  Action action = act::Wait{};
  DecisionSections sections;
  std::string raw;
  std::vector<std::string> warnings;
};

inline DecisionSections split_sections(std::string_view text) {
  static const std::array<std::string_view, 4> heads = {"(Previous action verification)", "(Screenshot Analysis)",
                                                        "(Next Action)", "(Grounded Action)"};
  const auto low = detail::lower(text);
  std::array<std::size_t, 4> at{};
  for (std::size_t i = 0; i < heads.size(); ++i) at[i] = low.find(detail::lower(heads[i]));
  auto body = [&](std::size_t i) -> std::string {
    if (at[i] == std::string::npos) return {};
    const auto start = at[i] + heads[i].size();
    std::size_t end = text.size();
    for (std::size_t j = 0; j < heads.size(); ++j)
      if (at[j] != std::string::npos && at[j] > at[i]) end = std::min(end, at[j]);
    return detail::trim_copy(text.substr(start, end - start));
  };
  return {body(0), body(1), body(2), body(3)};
}

// The action comes from the grounded-action section only.
inline Decision parse_decision(std::string_view text, const ActionKindSet& allowed = ActionKindSet::all()) {
  Decision d;
  d.raw = std::string(text);
  d.sections = split_sections(text);
  if (d.sections.grounded.empty()) fail(ErrorCode::ParseError, "reply has no (Grounded Action) section");
  try {
    auto parsed = parse_action_detailed(d.sections.grounded);
    d.action = std::move(parsed.action);
    d.warnings = std::move(parsed.warnings);
  } catch (const Error& e) {
    fail(ErrorCode::ParseError, std::string("grounded action: ") + e.what());
  }
  const auto violations = validate(d.action, allowed);
  if (!violations.empty()) fail(ErrorCode::ParseError, violations.front().message);
  for (const auto* part : {&d.sections.verification, &d.sections.analysis, &d.sections.next_action})
    if (!part->empty()) d.thought += (d.thought.empty() ? "" : "\n") + *part;
  return d;
}

struct DecideResult {
  Decision decision;
  TokenUsage tokens;
  int attempts = 0;
};

inline DecideResult decide(const AssembledContext& ctx, ModelBackend& backend,
                           const ActionKindSet& allowed = ActionKindSet::all()) {
  auto req = ctx.request;
  DecideResult res;
  for (;;) {
    const auto resp = backend.chat(req);
    res.tokens += usage_of(resp);
    ++res.attempts;
    try {
      res.decision = parse_decision(resp.text, allowed);
      return res;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseError || res.attempts >= 2) throw;
      log::warn(std::string("orchestrator reply unparseable, retrying: ") + e.what());
      detail::retry_turn(req, resp.text, prompts::kFormatReminder);
    }
  }
}

}  // namespace symphony
