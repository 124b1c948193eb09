#include <gtest/gtest.h>

#include "symphony/env/conformance.hpp"
#include "symphony/env/simulated.hpp"
#include "symphony/env/socket_wire.hpp"

using namespace symphony;
using nlohmann::json;

namespace {

json editor_json(bool command = true, bool ocr = true) {
  auto j = json::parse(R"json({
    "schema": "symphony.scenario/1",
    "id": "editor",
    "instruction": "save the file",
    "screen": {"cols": 4, "rows": 3, "tile": 40},
    "initial": "editing",
    "states": {
      "editing": {"ocr": [{"text": "File", "bbox": [2, 2, 30, 14]}, {"text": "Save", "bbox": [42, 2, 78, 14]}]},
      "saved": {},
      "menu": {}
    },
    "transitions": [
      {"from": "editing", "kind": "click", "region": [40, 0, 80, 40], "to": "saved"},
      {"from": "editing", "kind": "hotkey", "keys": ["ctrl", "s"], "to": "saved"},
      {"kind": "drag_and_drop", "reject": true},
      {"from": "editing", "kind": "click", "region": [0, 0, 40, 40], "to": "menu"}
    ],
    "commands": [{"language": "python", "contains": "save()", "stdout": "ok\n", "to": "saved"}],
    "success_states": ["saved"]
  })json");
  j["capabilities"] = {{"command_channel", command}, {"ocr", ocr}};
  return j;
}

GroundedAction click_at(int x, int y) { return {act::Click{"thing"}, {{x, y}}}; }

}  // namespace

TEST(Primitives, HighlightSpanIsMovePressDragRelease) {
  const auto ps = primitives_for({act::HighlightTextSpan{"a", "b"}, {{1, 2}, {30, 2}}});
  ASSERT_EQ(ps.size(), 4u);
  EXPECT_EQ(ps[0].kind, PrimitiveKind::move);
  EXPECT_EQ(ps[1].kind, PrimitiveKind::press);
  EXPECT_EQ(ps[2].kind, PrimitiveKind::drag);
  EXPECT_EQ(ps[3].kind, PrimitiveKind::release);
  EXPECT_EQ(ps[1].point, (Point{1, 2}));
  EXPECT_EQ(ps[3].point, (Point{30, 2}));
}

TEST(Primitives, HotkeyPressesThenReleasesInReverse) {
  const auto ps = primitives_for({act::Hotkey{{"ctrl", "shift", "t"}}, {}});
  std::vector<std::string> seq;
  for (const auto& p : ps) seq.push_back(std::string(to_string(p.kind)) + ":" + p.text);
  EXPECT_EQ(seq, (std::vector<std::string>{"key_down:ctrl", "key_down:shift", "key_down:t", "key_up:t",
                                           "key_up:shift", "key_up:ctrl"}));
}

TEST(Primitives, TypeWithOverwriteAndEnter) {
  act::Type t;
  t.desc = "box";
  t.text = "abc";
  t.overwrite = true;
  t.enter = true;
  const auto ps = primitives_for({t, {{5, 5}}});
  ASSERT_GE(ps.size(), 4u);
  EXPECT_EQ(ps[0].kind, PrimitiveKind::move);
  EXPECT_EQ(ps[1].kind, PrimitiveKind::click);
  EXPECT_EQ(ps.back().kind, PrimitiveKind::key_up);
  EXPECT_EQ(ps.back().text, "enter");
  const auto typed = std::find_if(ps.begin(), ps.end(), [](const Primitive& p) { return p.kind == PrimitiveKind::type_text; });
  ASSERT_NE(typed, ps.end());
  EXPECT_EQ(typed->text, "abc");
}

TEST(Primitives, DispatchGuards) {
  const ScreenGeometry s{100, 50};
  EXPECT_THROW(check_dispatchable({act::Done{}, {}}, s), Error);
  try {
    check_dispatchable({act::Click{"x"}, {}}, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCoordinates);
  }
  try {
    check_dispatchable(click_at(100, 10), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PointOutOfBounds);
  }
  EXPECT_NO_THROW(check_dispatchable(click_at(99, 49), s));
}

TEST(Simulated, ClickOnSaveTransitions) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  const auto before = env.reset("t");
  EXPECT_EQ(before.image().width(), 160);
  EXPECT_EQ(before.image().height(), 120);
  const auto after = env.execute(click_at(60, 10));
  EXPECT_EQ(env.state(), "saved");
  EXPECT_TRUE(env.succeeded());
  EXPECT_NE(before.content_hash(), after.content_hash());
}

TEST(Simulated, UnmatchedActionKeepsState) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  const auto a = env.reset("t");
  const auto b = env.execute(click_at(150, 110));
  EXPECT_EQ(env.state(), "editing");
  EXPECT_EQ(a.content_hash(), b.content_hash());
}

TEST(Simulated, HotkeyAndRejection) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  env.reset("t");
  try {
    env.execute({act::DragAndDrop{"a", "b"}, {{1, 1}, {2, 2}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PrimitiveFailure);
  }
  env.execute({act::Hotkey{{"ctrl", "s"}}, {}});
  EXPECT_EQ(env.state(), "saved");
}

TEST(Simulated, RevisitSharesObservation) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  const auto a = env.reset("t");
  env.execute(click_at(60, 10));
  const auto b = env.reset("t");
  EXPECT_EQ(a.content_hash(), b.content_hash());
}

TEST(Simulated, CommandChannel) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  env.reset("t");
  const auto r = env.command({"bash", "echo hi"});
  EXPECT_EQ(r.stdout_text, "hi\n");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(env.command({"bash", "rm -rf /"}).exit_code, 127);
  EXPECT_EQ(env.command({"python", "doc.save()"}).stdout_text, "ok\n");
  EXPECT_EQ(env.state(), "saved");
}

TEST(Simulated, MissingCapabilities) {
  auto j = editor_json(false, false);
  j["capabilities"]["gui_primitives"] = false;
  SimulatedEnvironment env(scenario_from_json(j));
  env.reset("t");
  for (auto fn : std::vector<std::function<void()>>{[&] { env.execute(click_at(1, 1)); },
                                                    [&] { env.command({"bash", "echo hi"}); },
                                                    [&] { env.ocr(); }}) {
    try {
      fn();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::UnsupportedCapability);
    }
  }
}

TEST(Simulated, OcrRowsDense) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  env.reset("t");
  const auto t = env.ocr();
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1].text, "Save");
  EXPECT_EQ(t.rows[1].id, 1);
  EXPECT_FALSE(t.problem(env.screen()));
}

TEST(Simulated, ScenarioValidation) {
  auto j = editor_json();
  j["transitions"].push_back({{"from", "editing"}, {"to", "nowhere"}});
  EXPECT_THROW(scenario_from_json(j), Error);
  auto k = editor_json();
  k["states"]["bad"] = {{"tiles", {1, 2, 3}}};
  EXPECT_THROW(scenario_from_json(k), Error);
  EXPECT_THROW(scenario_from_json(json::parse(R"({"states": {}})")), Error);
}

TEST(Simulated, SandboxFactoryGivesFreshHandles) {
  auto j = editor_json();
  j["capabilities"]["search_sandbox"] = true;
  j["search"] = {{"states", {{"results", json::object()}}}};
  SimulatedEnvironment env(scenario_from_json(j));
  auto factory = env.sandbox_factory();
  const auto a = factory("how to save");
  const auto b = factory("how to save");
  EXPECT_NE(a->id(), b->id());
  EXPECT_NE(a->id(), env.id());
  EXPECT_EQ(static_cast<SimulatedEnvironment&>(*a).state(), "results");
}

TEST(Conformance, SimulatedPasses) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  const auto rep = run_conformance(env);
  EXPECT_TRUE(rep.passed()) << rep.render();
  EXPECT_GE(rep.checks.size(), 9u);
}

TEST(Conformance, SimulatedWithoutChannelsPasses) {
  SimulatedEnvironment env(scenario_from_json(editor_json(false, false)));
  const auto rep = run_conformance(env);
  EXPECT_TRUE(rep.passed()) << rep.render();
}

namespace {

// Reports wrong primitives for spans and leaks ids in OCR.
class SloppyEnv : public SimulatedEnvironment {
 public:
  using SimulatedEnvironment::SimulatedEnvironment;
  std::vector<Primitive> last_primitives() const override { return {}; }
  OcrTable ocr() override {
    auto t = SimulatedEnvironment::ocr();
    if (!t.rows.empty()) t.rows[0].id = 7;
    return t;
  }
};

}  // namespace

TEST(Conformance, CatchesBrokenAdapter) {
  SloppyEnv env(scenario_from_json(editor_json()));
  const auto rep = run_conformance(env);
  EXPECT_FALSE(rep.passed());
  int failed = 0;
  for (const auto& c : rep.checks) failed += c.passed ? 0 : 1;
  EXPECT_EQ(failed, 4) << rep.render();  // click, span, hotkey, ocr
}

TEST(SocketWire, HandleRequestNeverThrows) {
  SimulatedEnvironment env(scenario_from_json(editor_json()));
  const auto bad = envwire::handle_request(env, json{{"verb", "dance"}});
  EXPECT_FALSE(bad["ok"].get<bool>());
  EXPECT_EQ(bad["error"]["code"], "SchemaError");
  const auto missing = envwire::handle_request(env, json{{"nope", 1}});
  EXPECT_FALSE(missing["ok"].get<bool>());
  const auto oob = envwire::handle_request(env, json{{"verb", "execute"}, {"action", "agent.click(\"x\")"},
                                                     {"coordinates", {{500, 1}}}});
  EXPECT_EQ(oob["error"]["code"], "PointOutOfBounds");
  EXPECT_EQ(oob["error"]["message"].get<std::string>().rfind("PointOutOfBounds", 0), std::string::npos);
}

TEST(SocketWire, RemoteEnvironmentRoundTrip) {
  SimulatedEnvironment sim(scenario_from_json(editor_json()));
  envwire::EnvironmentServer server(sim);
  envwire::SocketEnvironment remote("127.0.0.1", server.port());
  EXPECT_EQ(remote.id(), "editor");
  EXPECT_EQ(remote.capabilities(), sim.capabilities());
  EXPECT_EQ(remote.screen().width(), 160);

  const auto local0 = sim.reset("t");
  const auto remote0 = remote.reset("t");
  EXPECT_EQ(remote0.content_hash(), local0.content_hash());
  remote.execute(click_at(60, 10));
  EXPECT_EQ(sim.state(), "saved");
  EXPECT_EQ(remote.last_primitives(), sim.last_primitives());
  EXPECT_EQ(remote.command({"bash", "echo hi"}).stdout_text, "hi\n");
  remote.reset("t");
  EXPECT_EQ(remote.ocr().rows, sim.ocr().rows);
  try {
    remote.execute({act::DragAndDrop{"a", "b"}, {{1, 1}, {2, 2}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PrimitiveFailure);
  }
  server.stop();
}

TEST(Conformance, SocketClientPasses) {
  SimulatedEnvironment sim(scenario_from_json(editor_json()));
  envwire::EnvironmentServer server(sim);
  envwire::SocketEnvironment remote("127.0.0.1", server.port());
  const auto rep = run_conformance(remote);
  EXPECT_TRUE(rep.passed()) << rep.render();
  server.stop();
}

TEST(SocketWire, ServerStopDisconnectsClient) {
  SimulatedEnvironment sim(scenario_from_json(editor_json()));
  auto server = std::make_unique<envwire::EnvironmentServer>(sim);
  envwire::SocketEnvironment remote("127.0.0.1", server->port());
  server->stop();
  try {
    remote.observe();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EnvironmentError);
  }
}
