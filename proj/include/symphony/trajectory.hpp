#pragma once

// Episode data model: steps, the orchestrator's short-term window, the
// reflection agent's milestone-gated long-term view and the knowledge store.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symphony/actions.hpp"
#include "symphony/error.hpp"
#include "symphony/log.hpp"
#include "symphony/observation.hpp"
#include "symphony/protocol.hpp"

namespace symphony {

struct StepSummary {
  std::string text;
  bool success = true;
  friend bool operator==(const StepSummary&, const StepSummary&) = default;
};

struct TokenUsage {
  std::int64_t prompt = 0;
  std::int64_t completion = 0;
  bool estimated = false;

  TokenUsage& operator+=(const TokenUsage& o) {
    prompt += o.prompt;
    completion += o.completion;
    estimated = estimated || o.estimated;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

// Per-role token usage; roles are "orchestrator", "summarizer", "rma",
// "grounder", "searcher", "coder", ...
using TokenLedger = std::map<std::string, TokenUsage>;

inline void merge(TokenLedger& into, const TokenLedger& from) {
  for (const auto& [role, usage] : from) into[role] += usage;
}

// One inner-loop turn of a tool agent (searcher or coder).
struct ToolTurn {
  int turn = 0;
  std::string action;       // action call or code block as emitted
  std::string observation;  // what was fed back to the tool agent
  std::vector<std::string> warnings;
};

struct ToolRecord {
  std::string agent;           // "searcher" | "coder"
  std::string environment_id;  // handle the turns were dispatched to
  std::vector<ToolTurn> turns;
  std::string outcome;         // "done" | "fail" | "budget_exhausted"
  std::string result;          // folded text surfaced to the orchestrator
};

struct Step {
  int index = 0;
  Observation observation;
  std::string thought;
  Action action = act::Wait{};
  std::optional<GroundedAction> grounded;
  std::optional<StepSummary> summary;
  bool milestone = false;
  std::string raw_model_output;

  // Episode bookkeeping recorded alongside the step.
  std::optional<ReflectionMessage> reflection;  // R_i shown to the orchestrator at this step
  AuxiliarySignals signals;                     // hints that fed that reflection
  std::string note;                             // tool result or error note
  std::optional<ToolRecord> tool;
  TokenLedger tokens;
  std::vector<std::string> context_images;  // content hashes in the orchestrator context
  std::vector<std::string> rma_images;      // history content hashes sent to the RMA
  double temperature = 0.0;
  std::vector<std::string> stages;  // sub-operations in the order they ran
};

struct Tutorial {
  std::vector<std::string> steps;
  std::vector<std::string> source_urls;
  std::string query;

  bool empty() const { return steps.empty(); }
  std::string render() const {
    std::string out = "Tutorial for: " + query + "\n";
    for (std::size_t i = 0; i < steps.size(); ++i)
      out += std::to_string(i + 1) + ". " + steps[i] + "\n";
    if (!source_urls.empty()) {
      out += "Sources:";
      for (const auto& u : source_urls) out += " " + u;
      out += "\n";
    }
    return out;
  }
  friend bool operator==(const Tutorial&, const Tutorial&) = default;
};

class KnowledgeStore {
 public:
  struct Entry {
    std::string text;
    int origin_step = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  // Returns false (and logs) for an exact duplicate.
  bool add(std::string text, int origin_step) {
    if (text.empty()) fail(ErrorCode::Precondition, "knowledge text must be non-empty");
    for (const auto& e : entries_)
      if (e.text == text) {
        log::debug("duplicate knowledge ignored: " + text);
        return false;
      }
    entries_.push_back({std::move(text), origin_step});
    return true;
  }

  std::string recall() const {
    std::string out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) out += '\n';
      out += entries_[i].text;
    }
    return out;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<Entry> entries_;
};

enum class Outcome { running, done, fail, budget_exhausted, aborted };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::done: return "done";
    case Outcome::fail: return "fail";
    case Outcome::budget_exhausted: return "budget_exhausted";
    case Outcome::aborted: return "aborted";
  }
  return "running";
}

inline std::optional<Outcome> outcome_from_string(std::string_view s) {
  for (auto o : {Outcome::running, Outcome::done, Outcome::fail, Outcome::budget_exhausted,
                 Outcome::aborted})
    if (to_string(o) == s) return o;
  return std::nullopt;
}

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::string task_instruction) : task_instruction_(std::move(task_instruction)) {}

  const std::string& task_instruction() const { return task_instruction_; }
  const std::vector<Step>& steps() const { return steps_; }
  std::vector<Step>& mutable_steps() { return steps_; }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  Outcome outcome() const { return outcome_; }

  const std::optional<Tutorial>& tutorial() const { return tutorial_; }
  // Once attached a tutorial stays for the rest of the episode; a later
  // successful search replaces it with a newer one.
  void attach_tutorial(Tutorial t) {
    if (t.empty()) fail(ErrorCode::Precondition, "cannot attach an empty tutorial");
    tutorial_ = std::move(t);
    if (!tutorial_attached_at_) tutorial_attached_at_ = static_cast<int>(steps_.size());
  }
  std::optional<int> tutorial_attached_at() const { return tutorial_attached_at_; }

  KnowledgeStore& knowledge() { return knowledge_; }
  const KnowledgeStore& knowledge() const { return knowledge_; }

  // Appends the next step; Done/Fail close the episode.
  void append_step(Step step) {
    if (outcome_ != Outcome::running) fail(ErrorCode::EpisodeClosed, "episode already terminated");
    if (step.index != static_cast<int>(steps_.size()))
      fail(ErrorCode::IndexMismatch, "expected step index " + std::to_string(steps_.size()) +
                                         ", got " + std::to_string(step.index));
    const auto kind = kind_of(step.action);
    steps_.push_back(std::move(step));
    if (kind == ActionKind::done) outcome_ = Outcome::done;
    if (kind == ActionKind::fail) outcome_ = Outcome::fail;
  }

  // For budget exhaustion and aborts; only a running episode can close.
  void close(Outcome outcome) {
    if (outcome_ != Outcome::running) fail(ErrorCode::EpisodeClosed, "episode already terminated");
    if (outcome == Outcome::running) return;
    outcome_ = outcome;
  }

 private:
  std::string task_instruction_;
  std::vector<Step> steps_;
  std::optional<Tutorial> tutorial_;
  std::optional<int> tutorial_attached_at_;
  KnowledgeStore knowledge_;
  Outcome outcome_ = Outcome::running;
};

// Most recent min(K-1, len) completed steps, oldest first. The current
// observation is not part of the window.
inline std::span<const Step> short_term_window(const Trajectory& traj, int k) {
  if (k < 1) fail(ErrorCode::Precondition, "K must be >= 1");
  const auto& steps = traj.steps();
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k - 1), steps.size());
  return std::span<const Step>(steps).subspan(steps.size() - n, n);
}

struct LongTermEntry {
  int index = 0;
  std::string summary;
  bool milestone = false;
  std::optional<Observation> screenshot;  // present for milestones and step 0
};

struct LongTermMemory {
  std::vector<LongTermEntry> entries;
  std::vector<KnowledgeStore::Entry> knowledge;

  std::size_t image_count() const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [](const auto& e) { return e.screenshot.has_value(); }));
  }
};

inline std::string step_summary_text(const Step& s) {
  if (s.summary) return s.summary->text;
  if (!s.note.empty()) return s.note;
  return format_action(s.action);
}

// Every step contributes its summary; screenshots only where the milestone
// marker is set. The initial screenshot always counts as a milestone.
inline LongTermMemory long_term_view(const Trajectory& traj) {
  LongTermMemory mem;
  for (const auto& s : traj.steps()) {
    LongTermEntry e;
    e.index = s.index;
    e.summary = step_summary_text(s);
    e.milestone = s.milestone || s.index == 0;
    if (e.milestone && s.observation.valid()) e.screenshot = s.observation;
    mem.entries.push_back(std::move(e));
  }
  mem.knowledge = traj.knowledge().entries();
  return mem;
}

}  // namespace symphony
