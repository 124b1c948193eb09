#include <gtest/gtest.h>

#include "symphony/env/simulated.hpp"
#include "symphony/log.hpp"
#include "symphony/scripted_episode.hpp"

using namespace symphony;
using nlohmann::json;

namespace {

std::string orch(const std::string& call) {
  return "(Previous action verification)\nok\n(Screenshot Analysis)\nscreen\n(Next Action)\nplan\n"
         "(Grounded Action)\n```python\n" + call + "\n```";
}

std::string rma_reply(const std::string& reflection, bool milestone = false) {
  return "```json\n" + json{{"reflection", reflection}, {"knowledge", ""}, {"is_milestone", milestone}}.dump() + "\n```";
}

json simple_world() {
  return json::parse(R"json({
    "schema": "symphony.scenario/1",
    "id": "simple",
    "instruction": "open the file",
    "screen": {"cols": 4, "rows": 3, "tile": 40},
    "capabilities": {"gui_primitives": true, "command_channel": true},
    "initial": "start",
    "states": {"start": {}, "menu": {}, "opened": {}},
    "transitions": [
      {"from": "start", "kind": "click", "region": [0, 0, 40, 40], "to": "menu"},
      {"from": "menu", "kind": "click", "region": [40, 0, 80, 40], "to": "opened"},
      {"kind": "type", "contains": "boom", "reject": true}
    ],
    "commands": [{"language": "bash", "contains": "touch", "stdout": "", "to": "opened"}],
    "success_states": ["opened"]
  })json");
}

struct Rig {
  json models;
  ScriptedModels m;
  Rig() {
    models["rma"]["fallback"] = rma_reply("You are on track. fine");
    models["summarizer"]["fallback"] = "summary: done it\nsuccess: yes";
    models["grounder"]["rules"] = json::array({json{{"contains", "Element: File"}, {"reply", "(20, 20)"}},
                                               json{{"contains", "Element: Open"}, {"reply", "(60, 20)"}}});
    models["grounder"]["fallback"] = "NONE";
  }
  ScriptedModels& build(const std::vector<std::string>& orchestrator_script) {
    models["orchestrator"]["script"] = orchestrator_script;
    m = scripted_models(models);
    return m;
  }
};

bool before(const std::vector<std::string>& v, const std::string& a, const std::string& b) {
  auto ia = std::find(v.begin(), v.end(), a), ib = std::find(v.begin(), v.end(), b);
  return ia != v.end() && ib != v.end() && ia < ib;
}

}  // namespace

TEST(Episode, ThreeStepsToDone) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  auto& m = rig.build({orch("agent.click(\"File menu\")"), orch("agent.click(\"Open item\")"), orch("agent.done()")});
  auto r = run_episode("simple", "open the file", env, m.backends);
  EXPECT_EQ(r.outcome, Outcome::done);
  EXPECT_FALSE(r.error_code);
  EXPECT_TRUE(env.succeeded());
  ASSERT_EQ(r.trajectory.size(), 3u);
  const auto& s = r.trajectory.steps();
  EXPECT_TRUE(s[0].milestone);
  EXPECT_FALSE(s[0].reflection);
  EXPECT_EQ(s[0].stages, (std::vector<std::string>{"decide", "ground", "dispatch"}));
  EXPECT_EQ(s[1].stages, (std::vector<std::string>{"summarize", "detect_loop", "reflect", "decide", "ground", "dispatch"}));
  ASSERT_TRUE(s[0].summary);
  ASSERT_TRUE(s[1].summary);
  EXPECT_FALSE(s[2].summary);
  EXPECT_EQ(s[0].grounded->coordinates, (std::vector<Point>{{20, 20}}));
  EXPECT_EQ(m.by_role["rma"]->calls(), 2u);
  EXPECT_EQ(m.by_role["summarizer"]->calls(), 2u);
  // step 0 context: system prompt and the current screenshot only
  const auto first = m.by_role["orchestrator"]->requests()[0];
  EXPECT_EQ(first.image_count(), 1u);
  EXPECT_EQ(first.all_text().find("Reflection:"), std::string::npos);
  EXPECT_NE(m.by_role["orchestrator"]->requests()[1].all_text().find("Reflection:"), std::string::npos);
  EXPECT_EQ(attributed_tokens(r), r.tokens);
}

TEST(Episode, BudgetExhaustedAtMaxSteps) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  rig.models["orchestrator"]["fallback"] = orch("agent.scroll(\"page\", -2)");
  rig.models["grounder"]["fallback"] = "(100, 100)";
  auto m = scripted_models(rig.models);
  EpisodeConfig cfg;
  cfg.orchestrator.max_steps = 5;
  auto r = run_episode("simple", "x", env, m.backends, cfg);
  EXPECT_EQ(r.outcome, Outcome::budget_exhausted);
  EXPECT_EQ(r.trajectory.size(), 5u);
  EXPECT_EQ(m.by_role["orchestrator"]->calls(), 5u);
}

TEST(Episode, GroundingFailureIsANoteNotAnAbort) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  auto& m = rig.build({orch("agent.click(\"Ghost button\")"), orch("agent.click(\"File menu\")"), orch("agent.fail()")});
  auto r = run_episode("simple", "x", env, m.backends);
  EXPECT_EQ(r.outcome, Outcome::fail);
  ASSERT_EQ(r.trajectory.size(), 3u);
  const auto& s0 = r.trajectory.steps()[0];
  EXPECT_NE(s0.note.find("grounding failed"), std::string::npos);
  EXPECT_FALSE(s0.grounded);
  EXPECT_FALSE(s0.summary);
  EXPECT_EQ(env.executed().size(), 1u);
}

TEST(Episode, DispatchFailureAborts) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  rig.models["grounder"]["fallback"] = "(10, 10)";
  auto& m = rig.build({orch("agent.type(\"box\", \"boom\")")});
  log::Capture cap;
  auto r = run_episode("simple", "x", env, m.backends);
  EXPECT_EQ(r.outcome, Outcome::aborted);
  EXPECT_EQ(r.error_code, ErrorCode::PrimitiveFailure);
  ASSERT_EQ(r.trajectory.size(), 1u);
  EXPECT_NE(r.trajectory.steps()[0].note.find("dispatch failed"), std::string::npos);
  EXPECT_TRUE(cap.contains("aborted"));
}

TEST(Episode, BackendErrorAbortsWithoutThrowing) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  auto& m = rig.build({orch("agent.click(\"File menu\")")});
  auto r = run_episode("simple", "x", env, m.backends);
  EXPECT_EQ(r.outcome, Outcome::aborted);
  EXPECT_EQ(r.error_code, ErrorCode::BackendError);
  EXPECT_EQ(r.trajectory.size(), 1u);
  EXPECT_FALSE(r.unattached.empty());
  EXPECT_EQ(attributed_tokens(r), r.tokens);
}

TEST(Episode, CoderDoneRaisesPendingVerificationHint) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  rig.models["coder"]["script"] = json::array({"```bash\ntouch notes.txt\n```", "```\nDONE\n```",
                                               "synopsis: created notes.txt\nverification: look in the file browser"});
  auto& m = rig.build({orch("agent.call_code_agent(\"create notes.txt\")"), orch("agent.done()")});
  auto r = run_episode("simple", "x", env, m.backends);
  EXPECT_EQ(r.outcome, Outcome::done);
  const auto& s = r.trajectory.steps();
  EXPECT_EQ(s[0].note, "Code agent DONE: created notes.txt Verification: look in the file browser");
  EXPECT_EQ(s[0].tool->agent, "coder");
  EXPECT_TRUE(s[1].signals.coder_pending_verification);
  EXPECT_NE(m.by_role["rma"]->requests()[0].all_text().find(kCoderPendingHint), std::string::npos);
  EXPECT_TRUE(before(s[0].stages, "decide", "code"));
  EXPECT_FALSE(s[0].summary);
  EXPECT_EQ(attributed_tokens(r), r.tokens);
  EXPECT_TRUE(r.tokens.count("coder"));
}

TEST(Episode, FailedGuiSummaryRaisesHint) {
  SimulatedEnvironment env(scenario_from_json(simple_world()));
  Rig rig;
  rig.models["summarizer"]["fallback"] = "summary: nothing happened\nsuccess: no";
  auto& m = rig.build({orch("agent.click(\"Open item\")"), orch("agent.done()")});
  auto r = run_episode("simple", "x", env, m.backends);
  ASSERT_EQ(r.trajectory.size(), 2u);
  EXPECT_EQ(r.trajectory.steps()[1].signals.gui_failure, true);
  EXPECT_NE(m.by_role["rma"]->requests()[0].all_text().find(kGuiFailureHint), std::string::npos);
}

TEST(Episode, DarkModeLoopSearchRecovery) {
  const auto scenario = load_scenario(std::string(SYMPHONY_SOURCE_DIR) + "/scenarios/dark_mode.json");
  SimulatedEnvironment env(scenario);
  auto m = scripted_models(scenario.models);
  auto r = run_episode(scenario.id, scenario.instruction, env, env.sandbox_factory(), m.backends);
  ASSERT_EQ(r.outcome, Outcome::done) << r.error;
  EXPECT_TRUE(env.succeeded());
  const auto& s = r.trajectory.steps();
  ASSERT_EQ(s.size(), 9u);
  ASSERT_TRUE(s[6].signals.loop);
  EXPECT_EQ(s[6].signals.loop->historical_start, 0);
  EXPECT_EQ(s[6].signals.loop->current_start, 3);
  ASSERT_TRUE(s[6].reflection);
  EXPECT_EQ(s[6].reflection->error_type(), OffTrackError::LackOfTutorial);
  EXPECT_EQ(kind_of(s[6].action), ActionKind::call_search_agent);
  EXPECT_EQ(s[6].note, "Search agent DONE: tutorial attached");
  EXPECT_NE(s[6].tool->environment_id, env.id());
  EXPECT_EQ(r.trajectory.tutorial_attached_at(), 6);
  const auto reqs = m.by_role["orchestrator"]->requests();
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_LE(reqs[i].image_count(), 8u);
    EXPECT_EQ(reqs[i].all_text().find("Tutorial found") != std::string::npos, i >= 7) << i;
  }
  for (const auto& q : m.by_role["rma"]->requests()) EXPECT_LE(q.image_count(), 8u);
  EXPECT_EQ(env.executed().size(), 7u);
  EXPECT_EQ(r.trajectory.knowledge().size(), 1u);
  for (const auto& st : s) {
    if (st.index == 0) continue;
    EXPECT_TRUE(before(st.stages, "detect_loop", "reflect"));
    EXPECT_TRUE(before(st.stages, "reflect", "decide"));
  }
  EXPECT_EQ(attributed_tokens(r), r.tokens);
}
