#include <gtest/gtest.h>

#include <unistd.h>

#include "support/generators.hpp"
#include "symphony/harness.hpp"
#include "symphony/log.hpp"

using namespace symphony;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(SYMPHONY_SOURCE_DIR) / "scenarios";

struct TempDir {
  fs::path path;
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path = fs::temp_directory_path() /
           ("symphony-" + std::string(info->name()) + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

EpisodeResult run_dark_mode() {
  const auto scenario = load_scenario(kScenarios / "dark_mode.json");
  SimulatedEnvironment env(scenario);
  return run_episode(scenario.id, scenario.instruction, env, env.sandbox_factory(),
                     scripted_models(scenario.models).backends);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream f(p);
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream f(p);
  for (const auto& l : lines) f << l << "\n";
}

Observation shot(int seed) {
  Image img(32, 24, Rgb{static_cast<std::uint8_t>(seed * 23), 10, 10});
  img.set(seed % 32, 3, Rgb{250, 250, 250});
  return Observation(std::move(img));
}

// A log built by hand: actions in order, reflections optional per step.
LoadedLog fixture_log(const std::string& task, int pass, bool success, const std::vector<Action>& actions,
                      const std::vector<std::pair<bool, std::optional<OffTrackError>>>& gui_and_verdict = {}) {
  LoadedLog l;
  l.header.task_id = task;
  l.header.extra = {{"pass", pass}, {"success", success}};
  l.result.task_id = task;
  l.result.trajectory = Trajectory("t");
  for (std::size_t i = 0; i < actions.size(); ++i) {
    Step s;
    s.index = static_cast<int>(i);
    s.observation = shot(static_cast<int>(i));
    s.action = actions[i];
    s.tokens["orchestrator"] = {100 + static_cast<std::int64_t>(i), 10, false};
    if (i < gui_and_verdict.size()) {
      const auto& [gui, err] = gui_and_verdict[i];
      s.signals.gui_failure = gui;
      s.reflection = err ? ReflectionMessage(ReflectionState::OffTrack, err, "x")
                         : ReflectionMessage(ReflectionState::OnTrack, std::nullopt, "x");
    }
    l.result.tokens["orchestrator"] += s.tokens["orchestrator"];
    l.result.trajectory.append_step(std::move(s));
  }
  l.result.outcome = l.result.trajectory.outcome();
  return l;
}

}  // namespace

TEST(Manifest, ParsesAndValidates) {
  auto j = json::parse(R"({"schema": "symphony.manifest/1", "runs_per_task": 3, "workers": 2,
    "tasks": [{"id": "a", "scenario": "a.json"}, {"id": "b", "scenario": "/abs/b.json", "max_steps": 4}]})");
  auto m = manifest_from_json(j, "/base");
  EXPECT_EQ(m.tasks[0].scenario, fs::path("/base/a.json"));
  EXPECT_EQ(m.tasks[1].scenario, fs::path("/abs/b.json"));
  EXPECT_EQ(m.tasks[1].max_steps, 4);
  EXPECT_NEAR(m.temperature_for(2), 0.3, 1e-12);

  j["tasks"][1]["id"] = "a";
  EXPECT_THROW(manifest_from_json(j), Error);
  j["tasks"][1]["id"] = "b";
  j["runs_per_task"] = 0;
  EXPECT_THROW(manifest_from_json(j), Error);
  j["runs_per_task"] = 1;
  j["schema"] = "other/1";
  try {
    manifest_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Run, TwoTasksAndAMissingScenario) {
  TempDir tmp;
  auto m = load_manifest(kScenarios / "manifest.json");
  m.tasks.push_back({"ghost", "", tmp.path / "nope.json", std::nullopt});
  log::Capture cap;
  auto s = run_manifest(m, tmp.path / "runs");
  ASSERT_EQ(s.runs.size(), 3u);
  EXPECT_TRUE(s.runs[0].success);
  EXPECT_TRUE(s.runs[1].success);
  EXPECT_FALSE(s.runs[2].success);
  EXPECT_NE(s.runs[2].error.find("ConfigError"), std::string::npos);
  EXPECT_TRUE(fs::exists(s.runs[0].log_dir / "trajectory.jsonl"));
  EXPECT_TRUE(fs::exists(s.runs[1].log_dir / "trajectory.jsonl"));
  EXPECT_TRUE(s.any_failures());
  EXPECT_TRUE(cap.contains("ghost"));
  EXPECT_EQ(summary_json(s)["runs"].size(), 3u);
}

TEST(Run, TemperatureSchedulePerPass) {
  TempDir tmp;
  auto m = load_manifest(kScenarios / "manifest.json");
  m.tasks.resize(1);
  m.runs_per_task = 3;
  m.workers = 3;
  auto s = run_manifest(m, tmp.path);
  ASSERT_EQ(s.runs.size(), 3u);
  const double want[] = {0.1, 0.2, 0.3};
  for (int p = 0; p < 3; ++p) {
    auto l = read_log(s.runs[static_cast<std::size_t>(p)].log_dir);
    EXPECT_NEAR(l.header.extra["temperature"].get<double>(), want[p], 1e-9);
    EXPECT_NEAR(l.header.config["temperature"].get<double>(), want[p], 1e-9);
    for (const auto& st : l.result.trajectory.steps()) EXPECT_NEAR(st.temperature, want[p], 1e-9);
  }
}

TEST(PassAtK, Examples) {
  EXPECT_DOUBLE_EQ(pass_at_k({{"A", {true, true}}, {"B", {true, true}}}, 1), 1.0);
  EXPECT_DOUBLE_EQ(pass_at_k({{"A", {true, false}}, {"B", {false, false}}}, 1), 0.5);
  EXPECT_DOUBLE_EQ(pass_at_k({{"A", {true, false}}, {"B", {false, false}}}, 2), 0.5);
  EXPECT_DOUBLE_EQ(pass_at_k({{"A", {false, true}}, {"B", {false, false}}}, 1), 0.0);
  EXPECT_DOUBLE_EQ(pass_at_k({{"A", {false, true}}, {"B", {false, false}}}, 2), 0.5);
  try {
    pass_at_k({{"A", {true}}}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientRuns);
  }
}

TEST(PassAtK, MonotoneInK) {
  test_support::Gen g(5);
  for (int iter = 0; iter < 500; ++iter) {
    TaskResults r;
    const int runs = g.uniform(1, 6);
    for (int t = g.uniform(1, 5); t > 0; --t) {
      auto& v = r["t" + std::to_string(t)];
      for (int i = 0; i < runs; ++i) v.push_back(g.coin(0.3));
    }
    for (int k = 1; k < runs; ++k) EXPECT_LE(pass_at_k(r, k), pass_at_k(r, k + 1));
  }
}

TEST(Stats, ClickFractionAndTokenConservation) {
  std::vector<Action> acts;
  for (int i = 0; i < 6; ++i) acts.push_back(act::Click{"b"});
  acts.push_back(act::Type{"f", "x"});
  acts.push_back(act::Scroll{"p", -2});
  acts.push_back(act::Hotkey{{"ctrl", "s"}});
  acts.push_back(act::Done{});
  auto rep = compute_stats({fixture_log("a", 1, true, acts)});
  EXPECT_DOUBLE_EQ(rep.action_fractions["click"], 0.6);
  double sum = 0;
  for (const auto& [a, f] : rep.action_fractions) sum += f;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(rep.token_totals["orchestrator"].prompt, 100 * 10 + 45);
  EXPECT_TRUE(rep.conservation_mismatch.empty());
  EXPECT_EQ(rep.steps_success[10], 1u);
}

TEST(Stats, CrosstabRowSums) {
  std::vector<Action> acts(8, act::Click{"b"});
  std::vector<std::pair<bool, std::optional<OffTrackError>>> sig = {
      {true, OffTrackError::GUIError}, {true, OffTrackError::GUIError}, {true, OffTrackError::GUIError},
      {true, OffTrackError::GUIError}, {true, std::nullopt},            {false, std::nullopt},
      {false, OffTrackError::OtherError}};
  auto rep = compute_stats({fixture_log("a", 1, false, acts, sig)});
  EXPECT_EQ(rep.crosstab["GUI signal"]["GUIError"], 4u);
  std::size_t row = 0;
  for (const auto& [c, n] : rep.crosstab["GUI signal"]) row += n;
  EXPECT_EQ(row, 5u);
  EXPECT_EQ(rep.signal_counts["GUI signal"], 5u);
  EXPECT_EQ(rep.crosstab["Normal"]["OtherError"], 1u);
  EXPECT_EQ(rep.crosstab["Normal"]["Normal"], 1u);
  EXPECT_EQ(rep.steps_failure[8], 1u);
}

TEST(Stats, PassAtKFromLogsAndPurity) {
  std::vector<LoadedLog> logs = {fixture_log("A", 1, false, {act::Done{}}), fixture_log("A", 2, true, {act::Done{}}),
                                 fixture_log("B", 1, false, {act::Fail{}}), fixture_log("B", 2, false, {act::Fail{}})};
  auto rep = compute_stats(logs);
  EXPECT_DOUBLE_EQ(rep.pass_at_k[1], 0.0);
  EXPECT_DOUBLE_EQ(rep.pass_at_k[2], 0.5);
  std::reverse(logs.begin(), logs.end());
  EXPECT_EQ(compute_stats(logs).to_json(), rep.to_json());
  EXPECT_NE(rep.render().find("pass@2"), std::string::npos);
}

TEST(Log, RoundTripIsByteIdentical) {
  TempDir tmp;
  auto r = run_dark_mode();
  write_log(tmp.path / "a", r, {});
  auto back = read_log(tmp.path / "a");
  EXPECT_EQ(render_log(back.result, {}, back.header.extra), slurp(tmp.path / "a" / "trajectory.jsonl"));
  EXPECT_EQ(back.result.trajectory.tutorial_attached_at(), 6);
  EXPECT_EQ(back.result.outcome, Outcome::done);
}

TEST(Log, DarkModeRunTwiceGivesIdenticalLogs) {
  TempDir tmp;
  write_log(tmp.path / "one", run_dark_mode(), {});
  write_log(tmp.path / "two", run_dark_mode(), {});
  EXPECT_EQ(slurp(tmp.path / "one" / "trajectory.jsonl"), slurp(tmp.path / "two" / "trajectory.jsonl"));
}

TEST(Log, CorruptionDetected) {
  TempDir tmp;
  write_log(tmp.path / "a", run_dark_mode(), {});
  const auto file = tmp.path / "a" / "trajectory.jsonl";
  auto lines = lines_of(file);
  auto expect_corrupt = [&](const std::vector<std::string>& ls) {
    write_lines(file, ls);
    try {
      read_log(file);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptLog);
    }
  };
  auto broken = lines;
  broken[2] = "{not json";
  expect_corrupt(broken);
  broken = lines;
  broken.pop_back();
  expect_corrupt(broken);
  broken = lines;
  auto j = json::parse(broken[3]);
  j["index"] = 7;
  broken[3] = j.dump();
  expect_corrupt(broken);
  write_lines(file, lines);
  for (const auto& e : fs::directory_iterator(tmp.path / "a" / "images")) {
    fs::remove(e.path());
    break;
  }
  expect_corrupt(lines);
}

TEST(Replay, PristineLogIsClean) {
  TempDir tmp;
  write_log(tmp.path / "a", run_dark_mode(), {});
  auto rep = replay(read_log(tmp.path / "a"));
  EXPECT_TRUE(rep.clean()) << rep.render();
  EXPECT_GT(rep.checks, 30u);
}

TEST(Replay, TamperedLoopSignalDiverges) {
  TempDir tmp;
  write_log(tmp.path / "a", run_dark_mode(), {});
  const auto file = tmp.path / "a" / "trajectory.jsonl";
  auto lines = lines_of(file);
  auto j = json::parse(lines[7]);  // step 6
  ASSERT_FALSE(j["signals"]["loop"].is_null());
  j["signals"]["loop"] = nullptr;
  lines[7] = j.dump();
  write_lines(file, lines);
  auto rep = replay(read_log(file));
  ASSERT_EQ(rep.divergences.size(), 1u);
  EXPECT_EQ(rep.divergences[0].check, "loop");
  EXPECT_EQ(rep.divergences[0].step, 6);
}

TEST(Replay, DuplicatedWindowDiverges) {
  // step 6 rewritten as a copy of step 3, so steps 4..6 repeat 1..3 and the
  // detector fires at step 7 where the run recorded nothing
  TempDir tmp;
  write_log(tmp.path / "a", run_dark_mode(), {});
  const auto file = tmp.path / "a" / "trajectory.jsonl";
  auto lines = lines_of(file);
  const auto src = json::parse(lines[4]);
  auto j = json::parse(lines[7]);
  for (const char* key : {"action", "observation", "grounded"}) j[key] = src[key];
  lines[7] = j.dump();
  ASSERT_TRUE(json::parse(lines[8])["signals"]["loop"].is_null());
  write_lines(file, lines);
  auto rep = replay(read_log(file));
  bool loop_div = false;
  for (const auto& d : rep.divergences) loop_div |= d.check == "loop" && d.step == 7;
  EXPECT_TRUE(loop_div) << rep.render();
}

TEST(Replay, NineImagesFlagged) {
  TempDir tmp;
  write_log(tmp.path / "a", run_dark_mode(), {});
  const auto file = tmp.path / "a" / "trajectory.jsonl";
  auto lines = lines_of(file);
  auto j = json::parse(lines[9]);
  std::vector<std::string> imgs(9, j["observation"].get<std::string>());
  j["context_images"] = imgs;
  lines[9] = j.dump();
  write_lines(file, lines);
  auto rep = replay(read_log(file));
  bool flagged = false;
  for (const auto& d : rep.divergences) flagged |= d.check == "budget" && d.step == 8;
  EXPECT_TRUE(flagged) << rep.render();
}

TEST(Stats, LoadLogsSkipsCorrupt) {
  TempDir tmp;
  write_log(tmp.path / "good", run_dark_mode(), {}, {{"pass", 1}, {"success", true}});
  fs::create_directories(tmp.path / "bad");
  write_lines(tmp.path / "bad" / "trajectory.jsonl", {"garbage"});
  std::vector<std::string> skipped;
  log::Capture cap;
  auto logs = load_logs(tmp.path, &skipped);
  EXPECT_EQ(logs.size(), 1u);
  EXPECT_EQ(skipped.size(), 1u);
  auto rep = compute_stats(logs);
  EXPECT_DOUBLE_EQ(rep.pass_at_k[1], 1.0);
  EXPECT_EQ(rep.crosstab["Loop signal"]["LackOfTutorial"], 1u);
}
