#pragma once

// Scenario-driven simulated desktop. A scenario is a small state graph:
// each state renders as a sprite grid, and an ordered list of transitions
// maps (state, action pattern) to the next state. Unmatched actions leave the
// state unchanged; `reject` transitions raise PrimitiveFailure.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "symphony/env/environment.hpp"
#include "symphony/env/tiles.hpp"
#include "symphony/log.hpp"

namespace symphony {

struct ScenarioState {
  std::vector<int> tiles;
  std::vector<OcrRow> ocr;
};

struct Region {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // half-open
  bool contains(Point p) const { return p.x >= x1 && p.x < x2 && p.y >= y1 && p.y < y2; }
};

struct Transition {
  std::string from = "*";
  std::optional<ActionKind> kind;
  std::optional<Region> region;      // first resolved point
  std::optional<Region> end_region;  // second resolved point (drags, spans)
  std::optional<std::string> contains;  // substring of the canonical action text
  std::optional<KeyList> keys;          // exact hotkey list
  std::string to;
  bool reject = false;
};

struct ScriptedCommand {
  std::string language;  // empty matches any
  std::string contains;
  CommandResult result;
  std::optional<std::string> to;
};

struct Scenario {
  std::string id = "scenario";
  std::string instruction;
  std::string os = "Ubuntu";
  int cols = 4, rows = 3, tile = 40;
  Capabilities capabilities;
  std::string initial;
  std::map<std::string, ScenarioState> states;
  std::vector<Transition> transitions;
  std::vector<ScriptedCommand> commands;
  std::set<std::string> success_states;
  int max_steps = 15;
  std::shared_ptr<const Scenario> search;  // sandbox scenario for the searcher
  nlohmann::json models;                   // scripted replies per role, read by the harness

  ScreenGeometry screen() const { return {cols * tile, rows * tile}; }
};

namespace detail {

// FNV-1a, stable across platforms.
inline std::uint32_t fnv1a(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

inline std::vector<int> tiles_for_name(const std::string& name, int count) {
  std::vector<int> out(static_cast<std::size_t>(count));
  std::uint32_t h = fnv1a(name);
  for (auto& t : out) {
    h = h * 1664525u + 1013904223u;
    t = static_cast<int>((h >> 16) % kSpriteAlphabet);
  }
  return out;
}

inline Region region_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) fail(ErrorCode::ConfigError, "region must be [x1, y1, x2, y2]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  try {
    Scenario s;
    if (j.contains("schema") && j["schema"] != "symphony.scenario/1")
      fail(ErrorCode::ConfigError, "unknown scenario schema " + j["schema"].dump());
    s.id = j.value("id", s.id);
    s.instruction = j.value("instruction", std::string{});
    s.os = j.value("os", s.os);
    if (j.contains("screen")) {
      s.cols = j["screen"].value("cols", s.cols);
      s.rows = j["screen"].value("rows", s.rows);
      s.tile = j["screen"].value("tile", s.tile);
    }
    if (s.cols <= 0 || s.rows <= 0 || s.tile <= 0) fail(ErrorCode::ConfigError, "screen must be positive");
    if (j.contains("capabilities")) {
      const auto& c = j["capabilities"];
      s.capabilities.gui_primitives = c.value("gui_primitives", true);
      s.capabilities.command_channel = c.value("command_channel", false);
      s.capabilities.search_sandbox = c.value("search_sandbox", false);
      s.capabilities.ocr = c.value("ocr", false);
    }
    const int count = s.cols * s.rows;
    for (const auto& [name, st] : j.at("states").items()) {
      ScenarioState state;
      if (st.contains("tiles")) {
        state.tiles = st["tiles"].get<std::vector<int>>();
        if (static_cast<int>(state.tiles.size()) != count)
          fail(ErrorCode::ConfigError, "state " + name + " needs " + std::to_string(count) + " tiles");
      } else {
        state.tiles = detail::tiles_for_name(name, count);
      }
      int id = 0;
      for (const auto& r : st.value("ocr", json::array())) {
        const auto b = detail::region_from_json(r.at("bbox"));
        state.ocr.push_back({r.at("text").get<std::string>(), id++, b.x1, b.y1, b.x2, b.y2});
      }
      s.states.emplace(name, std::move(state));
    }
    if (s.states.empty()) fail(ErrorCode::ConfigError, "scenario has no states");
    s.initial = j.value("initial", s.states.begin()->first);
    if (!s.states.count(s.initial)) fail(ErrorCode::ConfigError, "unknown initial state " + s.initial);

    for (const auto& t : j.value("transitions", json::array())) {
      Transition tr;
      tr.from = t.value("from", std::string("*"));
      if (t.contains("kind")) {
        tr.kind = kind_from_name(t["kind"].get<std::string>());
        if (!tr.kind) fail(ErrorCode::ConfigError, "unknown action kind " + t["kind"].dump());
      }
      if (t.contains("region")) tr.region = detail::region_from_json(t["region"]);
      if (t.contains("end_region")) tr.end_region = detail::region_from_json(t["end_region"]);
      if (t.contains("contains")) tr.contains = t["contains"].get<std::string>();
      if (t.contains("keys")) tr.keys = t["keys"].get<KeyList>();
      tr.reject = t.value("reject", false);
      tr.to = t.value("to", tr.from);
      if (!tr.reject && tr.to != "*" && !s.states.count(tr.to))
        fail(ErrorCode::ConfigError, "transition to unknown state " + tr.to);
      if (tr.from != "*" && !s.states.count(tr.from))
        fail(ErrorCode::ConfigError, "transition from unknown state " + tr.from);
      s.transitions.push_back(std::move(tr));
    }
    for (const auto& c : j.value("commands", json::array())) {
      ScriptedCommand cmd;
      cmd.language = c.value("language", std::string{});
      cmd.contains = c.value("contains", std::string{});
      cmd.result = {c.value("stdout", std::string{}), c.value("stderr", std::string{}), c.value("exit_code", 0)};
      if (c.contains("to")) cmd.to = c["to"].get<std::string>();
      if (cmd.to && !s.states.count(*cmd.to)) fail(ErrorCode::ConfigError, "command to unknown state " + *cmd.to);
      s.commands.push_back(std::move(cmd));
    }
    for (const auto& name : j.value("success_states", std::vector<std::string>{})) s.success_states.insert(name);
    s.max_steps = j.value("max_steps", s.max_steps);
    if (j.contains("search")) {
      auto sub = j["search"];
      if (!sub.contains("id")) sub["id"] = s.id + "-search";
      s.search = std::make_shared<const Scenario>(scenario_from_json(sub));
    }
    if (j.contains("models")) s.models = j["models"];
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("malformed scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open scenario " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

class SimulatedEnvironment : public Environment {
 public:
  explicit SimulatedEnvironment(std::shared_ptr<const Scenario> scenario, std::string id = {})
      : scenario_(std::move(scenario)), id_(id.empty() ? scenario_->id : std::move(id)),
        state_(scenario_->initial) {}
  explicit SimulatedEnvironment(Scenario scenario, std::string id = {})
      : SimulatedEnvironment(std::make_shared<const Scenario>(std::move(scenario)), std::move(id)) {}

  std::string id() const override { return id_; }
  Capabilities capabilities() const override { return scenario_->capabilities; }
  ScreenGeometry screen() const override { return scenario_->screen(); }

  Observation reset(const std::string&) override {
    std::lock_guard lock(mu_);
    state_ = scenario_->initial;
    primitives_.clear();
    return render(state_);
  }

  Observation observe() override {
    std::lock_guard lock(mu_);
    return render(state_);
  }

  Observation execute(const GroundedAction& ga) override {
    require(scenario_->capabilities.gui_primitives, "gui_primitives");
    check_dispatchable(ga, screen());
    std::lock_guard lock(mu_);
    primitives_ = primitives_for(ga);
    history_.push_back(format_action(ga.action));
    for (const auto& t : scenario_->transitions) {
      if (!matches(t, ga)) continue;
      if (t.reject)
        fail(ErrorCode::PrimitiveFailure, id_ + ": " + format_action(ga.action) + " rejected in state " + state_);
      if (t.to != "*") state_ = t.to;
      break;
    }
    return render(state_);
  }

  CommandResult command(const CommandRequest& req) override {
    require(scenario_->capabilities.command_channel, "command_channel");
    std::lock_guard lock(mu_);
    for (const auto& c : scenario_->commands) {
      if (!c.language.empty() && c.language != req.language) continue;
      if (req.code.find(c.contains) == std::string::npos) continue;
      if (c.to) state_ = *c.to;
      return c.result;
    }
    const auto code = std::string_view(req.code);
    if (req.language == "bash" && code.rfind("echo ", 0) == 0) return {std::string(code.substr(5)) + "\n", "", 0};
    return {"", "command not found in scenario", 127};
  }

  OcrTable ocr() override {
    require(scenario_->capabilities.ocr, "ocr");
    std::lock_guard lock(mu_);
    return OcrTable{scenario_->states.at(state_).ocr, 0.1};
  }

  std::vector<Primitive> last_primitives() const override {
    std::lock_guard lock(mu_);
    return primitives_;
  }

  std::string state() const {
    std::lock_guard lock(mu_);
    return state_;
  }
  bool succeeded() const { return scenario_->success_states.count(state()) > 0; }
  const Scenario& scenario() const { return *scenario_; }
  // Canonical text of every action this handle executed.
  std::vector<std::string> executed() const {
    std::lock_guard lock(mu_);
    return history_;
  }

  // Each call opens a new sandbox with its own handle id.
  SandboxFactory sandbox_factory() {
    return [this](const std::string& query) -> EnvironmentPtr {
      if (!scenario_->capabilities.search_sandbox || !scenario_->search)
        fail(ErrorCode::UnsupportedCapability, id_ + " has no search sandbox");
      const int n = ++sandboxes_;
      auto env = std::make_shared<SimulatedEnvironment>(scenario_->search, id_ + "/search-" + std::to_string(n));
      env->reset(query);
      return env;
    };
  }

 private:
  bool matches(const Transition& t, const GroundedAction& ga) const {
    if (t.from != "*" && t.from != state_) return false;
    if (t.kind && *t.kind != kind_of(ga.action)) return false;
    if (t.region && (ga.coordinates.empty() || !t.region->contains(ga.coordinates[0]))) return false;
    if (t.end_region && (ga.coordinates.size() < 2 || !t.end_region->contains(ga.coordinates[1]))) return false;
    if (t.contains && format_action(ga.action).find(*t.contains) == std::string::npos) return false;
    if (t.keys) {
      const auto* hk = std::get_if<act::Hotkey>(&ga.action);
      if (!hk || hk->keys != *t.keys) return false;
    }
    return true;
  }

  // One Observation per state, so revisits share pixels and features.
  Observation render(const std::string& state) {
    auto it = rendered_.find(state);
    if (it == rendered_.end()) {
      const auto& st = scenario_->states.at(state);
      it = rendered_.emplace(state, Observation(render_tiles(st.tiles, scenario_->cols, scenario_->rows,
                                                             scenario_->tile)))
               .first;
    }
    return it->second;
  }

  std::shared_ptr<const Scenario> scenario_;
  std::string id_;
  mutable std::mutex mu_;
  std::string state_;
  std::map<std::string, Observation> rendered_;
  std::vector<Primitive> primitives_;
  std::vector<std::string> history_;
  std::atomic<int> sandboxes_{0};
};

}  // namespace symphony
