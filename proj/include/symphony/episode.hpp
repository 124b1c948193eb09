#pragma once

// One episode: per step summarize the previous action, look for loops,
// reflect, decide, then hand the action to a tool agent or ground and
// dispatch it. Errors from sub-operations end the episode as aborted; they
// are recorded in the result, never thrown.

#include <memory>
#include <string>

#include "symphony/loop_detector.hpp"
#include "symphony/orchestrator.hpp"
#include "symphony/rma.hpp"
#include "symphony/tool_agents.hpp"

namespace symphony {

// Adds every reply's usage to a role total and to whatever ledger is
// currently attached, so per-step ledgers sum to the total.
class CountingBackend : public ModelBackend {
 public:
  CountingBackend(BackendPtr inner, std::string role) : inner_(std::move(inner)), role_(std::move(role)) {
    if (!inner_) fail(ErrorCode::ConfigError, "no backend configured for " + role_);
  }

  ModelResponse chat(const ModelRequest& req) override {
    auto resp = inner_->chat(req);
    const auto u = usage_of(resp);
    total_ += u;
    ++calls_;
    if (sink_) (*sink_)[role_] += u;
    return resp;
  }
  std::size_t image_limit() const override { return inner_->image_limit(); }

  void attach(TokenLedger* sink) { sink_ = sink; }
  const TokenUsage& total() const { return total_; }
  std::size_t calls() const { return calls_; }
  const std::string& role() const { return role_; }

 private:
  BackendPtr inner_;
  std::string role_;
  TokenLedger* sink_ = nullptr;
  TokenUsage total_;
  std::size_t calls_ = 0;
};

struct EpisodeBackends {
  BackendPtr orchestrator, rma, summarizer, grounder, searcher, coder;

  static EpisodeBackends uniform(const BackendPtr& b) { return {b, b, b, b, b, b}; }
};

struct EpisodeConfig {
  OrchestratorConfig orchestrator;
  RmaConfig rma;
  LoopConfig loop;
  SearcherConfig searcher;
  CoderConfig coder;
  GroundingConfig grounding;
};

struct EpisodeResult {
  std::string task_id;
  Trajectory trajectory;
  Outcome outcome = Outcome::running;
  std::optional<ErrorCode> error_code;
  std::string error;
  TokenLedger tokens;      // per-role totals
  TokenLedger unattached;  // spent on a step that never made it into the trajectory
};

namespace detail {

inline std::vector<std::string> image_hashes(const ModelRequest& req, std::string_view label) {
  std::vector<std::string> out;
  for (const auto& m : req.messages)
    for (const auto& p : m.parts)
      if (p.is_image() && p.label == label) out.push_back(p.image.content_hash());
  return out;
}

inline bool previous_coder_done(const Step& prev) {
  return kind_of(prev.action) == ActionKind::call_code_agent && prev.tool && prev.tool->outcome == "done";
}

inline std::string code_note(const CodeOutcome& c) {
  switch (c.status) {
    case CodeStatus::done:
      return "Code agent DONE: " + one_line(c.synopsis) + " Verification: " + one_line(c.verification);
    case CodeStatus::fail: return "Code agent FAIL: " + c.reason;
    case CodeStatus::budget_exhausted: return "Code agent BUDGET_EXHAUSTED: " + c.reason;
  }
  return {};
}

}  // namespace detail

inline EpisodeResult run_episode(const std::string& task_id, const std::string& instruction, Environment& env,
                                 const SandboxFactory& sandboxes, const EpisodeBackends& backends,
                                 const EpisodeConfig& cfg = {}) {
  EpisodeResult res;
  res.task_id = task_id;
  res.trajectory = Trajectory(instruction);
  auto& traj = res.trajectory;

  std::vector<std::unique_ptr<CountingBackend>> counters;
  auto counted = [&](const BackendPtr& b, const char* role) -> CountingBackend& {
    counters.push_back(std::make_unique<CountingBackend>(b, role));
    return *counters.back();
  };
  auto& orchestrator = counted(backends.orchestrator, "orchestrator");
  auto& rma = counted(backends.rma, "rma");
  auto& summarizer = counted(backends.summarizer, "summarizer");
  auto& grounder = counted(backends.grounder, "grounder");
  auto& searcher = counted(backends.searcher, "searcher");
  auto& coder = counted(backends.coder, "coder");
  auto attach = [&](TokenLedger* sink) {
    for (auto& c : counters) c->attach(sink);
  };

  auto abort_with = [&](const Error& e) {
    res.error_code = e.code();
    res.error = e.what();
    log::warn("episode " + task_id + " aborted: " + res.error);
    if (traj.outcome() == Outcome::running) traj.close(Outcome::aborted);
  };

  try {
    cfg.orchestrator.validate();
    Observation o = env.reset(task_id);
    std::optional<ReflectionMessage> reflection;

    for (int i = 0;; ++i) {
      if (i >= cfg.orchestrator.max_steps) {
        traj.close(Outcome::budget_exhausted);
        break;
      }
      Step step;
      step.index = i;
      step.observation = o;
      step.temperature = cfg.orchestrator.temperature;
      step.milestone = i == 0;
      attach(&step.tokens);
      try {
        if (i > 0) {
          auto& prev = traj.mutable_steps()[static_cast<std::size_t>(i - 1)];
          if (prev.grounded) {
            std::optional<ZoomCrop> crop;
            if (!prev.grounded->coordinates.empty())
              crop = zoom_crop(prev.observation, prev.grounded->coordinates[0], cfg.rma.crop_radius,
                               cfg.rma.marker_radius);
            prev.summary = summarize_step(prev.raw_model_output, prev.observation, o, crop, summarizer, cfg.rma).summary;
            step.stages.emplace_back("summarize");
          }

          std::optional<LoopMatch> loop;
          try {
            loop = detect_loop(traj, cfg.loop);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::MissingCoordinates) throw;
          }
          step.stages.emplace_back("detect_loop");

          AuxiliarySignals signals;
          if (prev.summary) signals.gui_failure = !prev.summary->success;
          signals.loop = loop;
          signals.coder_pending_verification = detail::previous_coder_done(prev);

          ReflectInput in{instruction, long_term_view(traj), prev.raw_model_output, o, signals};
          auto r = reflect(in, traj.knowledge(), i, rma, cfg.rma);
          step.stages.emplace_back("reflect");
          step.milestone = r.verdict.milestone;
          step.signals = signals;
          step.rma_images = detail::image_hashes(r.request, "history");
          reflection = r.verdict.reflection;
          step.reflection = reflection;
        }

        auto ctx = assemble_context(traj, reflection, o, cfg.orchestrator);
        step.context_images = ctx.image_hashes;
        auto d = decide(ctx, orchestrator);
        step.stages.emplace_back("decide");
        step.thought = d.decision.thought;
        step.action = d.decision.action;
        step.raw_model_output = d.decision.raw;
        const auto kind = kind_of(step.action);

        if (kind == ActionKind::done || kind == ActionKind::fail) {
          attach(nullptr);
          traj.append_step(std::move(step));
          break;
        }

        if (kind == ActionKind::call_search_agent) {
          const auto& query = std::get<act::CallSearchAgent>(step.action).query;
          auto s = search(query, o, sandboxes, searcher, grounder, cfg.searcher);
          step.stages.emplace_back("search");
          if (s.done) {
            traj.attach_tutorial(s.tutorial);
            step.note = "Search agent DONE: tutorial attached";
          } else {
            step.note = "Search agent FAIL: " + s.hint;
          }
          step.tool = std::move(s.record);
          o = env.observe();
        } else if (kind == ActionKind::call_code_agent) {
          const auto& task = std::get<act::CallCodeAgent>(step.action).task;
          auto c = code_task(task, env, o, coder, cfg.coder);
          step.stages.emplace_back("code");
          step.note = detail::code_note(c);
          step.tool = std::move(c.record);
          o = env.observe();
        } else {
          std::optional<GroundingOutcome> g;
          try {
            g = ground_action(step.action, o, env, grounder, cfg.grounding);
            step.stages.emplace_back("ground");
          } catch (const Error& e) {
            if (!is_grounding_error(e.code())) throw;
            step.stages.emplace_back("ground");
            step.note = std::string("grounding failed: ") + e.what();
          }
          if (g) {
            step.grounded = g->grounded;
            try {
              o = env.execute(g->grounded);
              step.stages.emplace_back("dispatch");
            } catch (const Error& e) {
              if (e.code() != ErrorCode::PrimitiveFailure && e.code() != ErrorCode::EnvironmentError) throw;
              step.stages.emplace_back("dispatch");
              step.note = std::string("dispatch failed: ") + e.what();
              attach(nullptr);
              traj.append_step(std::move(step));
              abort_with(e);
              break;
            }
          }
        }
        attach(nullptr);
        traj.append_step(std::move(step));
      } catch (const Error&) {
        attach(nullptr);
        merge(res.unattached, step.tokens);
        throw;
      }
    }
  } catch (const Error& e) {
    abort_with(e);
  }
  attach(nullptr);
  res.outcome = traj.outcome();
  for (const auto& c : counters)
    if (c->calls() > 0) res.tokens[c->role()] += c->total();
  return res;
}

inline EpisodeResult run_episode(const std::string& task_id, const std::string& instruction, Environment& env,
                                 const EpisodeBackends& backends, const EpisodeConfig& cfg = {}) {
  return run_episode(task_id, instruction, env, SandboxFactory{}, backends, cfg);
}

// Sum of every step ledger plus the unattached remainder.
inline TokenLedger attributed_tokens(const EpisodeResult& r) {
  TokenLedger out = r.unattached;
  for (const auto& s : r.trajectory.steps()) merge(out, s.tokens);
  return out;
}

}  // namespace symphony
