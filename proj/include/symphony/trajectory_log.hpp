#pragma once

// Episode logs: <dir>/trajectory.jsonl plus <dir>/images/<hash>.png.
// Line 1 is the header, then one line per step, then an end line. No
// timestamps, and keys are sorted, so the same episode gives the same bytes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "symphony/episode.hpp"

namespace symphony {

inline constexpr std::string_view kTrajectorySchema = "symphony.trajectory/1";

namespace logio {

using nlohmann::json;

inline json usage_json(const TokenUsage& u) {
  return {{"prompt", u.prompt}, {"completion", u.completion}, {"estimated", u.estimated}};
}

inline json ledger_json(const TokenLedger& l) {
  json j = json::object();
  for (const auto& [role, u] : l) j[role] = usage_json(u);
  return j;
}

inline json config_json(const EpisodeConfig& c) {
  return {{"K", c.orchestrator.K},
          {"max_images", c.orchestrator.max_images},
          {"max_steps", c.orchestrator.max_steps},
          {"temperature", c.orchestrator.temperature},
          {"os", c.orchestrator.os},
          {"loop",
           {{"window", c.loop.window},
            {"phash_hamming_max", c.loop.phash_hamming_max},
            {"ssim_min", c.loop.ssim_min},
            {"coord_tolerance_fraction", c.loop.coord_tolerance_fraction},
            {"levenshtein_min", c.loop.levenshtein_min}}},
          {"searcher_budget", c.searcher.step_budget},
          {"coder_budget", c.coder.budget}};
}

inline json reflection_json(const ReflectionMessage& m) {
  json j{{"state", to_string(m.state())}, {"explanation", m.explanation()}};
  j["error_type"] = m.error_type() ? json(to_string(*m.error_type())) : json(nullptr);
  j["recalled_knowledge"] = m.recalled_knowledge() ? json(*m.recalled_knowledge()) : json(nullptr);
  return j;
}

inline json tool_json(const ToolRecord& t) {
  json turns = json::array();
  for (const auto& tt : t.turns)
    turns.push_back({{"turn", tt.turn}, {"action", tt.action}, {"observation", tt.observation}, {"warnings", tt.warnings}});
  return {{"agent", t.agent}, {"environment_id", t.environment_id}, {"outcome", t.outcome},
          {"result", t.result}, {"turns", turns}};
}

inline json step_json(const Step& s) {
  json j{{"type", "step"},
         {"index", s.index},
         {"observation", s.observation.valid() ? json(s.observation.content_hash()) : json(nullptr)},
         {"thought", s.thought},
         {"action", format_action(s.action)},
         {"milestone", s.milestone},
         {"raw_model_output", s.raw_model_output},
         {"note", s.note},
         {"tokens", ledger_json(s.tokens)},
         {"context_images", s.context_images},
         {"rma_images", s.rma_images},
         {"temperature", s.temperature},
         {"stages", s.stages}};
  if (s.grounded) {
    json pts = json::array();
    for (const auto& p : s.grounded->coordinates) pts.push_back({p.x, p.y});
    j["grounded"] = pts;
  } else {
    j["grounded"] = nullptr;
  }
  j["summary"] = s.summary ? json{{"text", s.summary->text}, {"success", s.summary->success}} : json(nullptr);
  j["reflection"] = s.reflection ? reflection_json(*s.reflection) : json(nullptr);
  json sig{{"coder_pending_verification", s.signals.coder_pending_verification}};
  sig["gui_failure"] = s.signals.gui_failure ? json(*s.signals.gui_failure) : json(nullptr);
  sig["loop"] = s.signals.loop ? json{{"historical_start", s.signals.loop->historical_start},
                                      {"current_start", s.signals.loop->current_start},
                                      {"length", s.signals.loop->length}}
                               : json(nullptr);
  j["signals"] = sig;
  j["tool"] = s.tool ? tool_json(*s.tool) : json(nullptr);
  return j;
}

[[noreturn]] inline void corrupt(const std::string& what) { fail(ErrorCode::CorruptLog, what); }

inline TokenUsage usage_from(const json& j) {
  return {j.at("prompt").get<std::int64_t>(), j.at("completion").get<std::int64_t>(), j.at("estimated").get<bool>()};
}

inline TokenLedger ledger_from(const json& j) {
  TokenLedger l;
  for (const auto& [role, u] : j.items()) l[role] = usage_from(u);
  return l;
}

inline ReflectionMessage reflection_from(const json& j) {
  const auto state = reflection_state_from_string(j.at("state").get<std::string>());
  if (!state) corrupt("unknown reflection state");
  std::optional<OffTrackError> err;
  if (!j.at("error_type").is_null()) {
    err = off_track_error_from_string(j["error_type"].get<std::string>());
    if (!err) corrupt("unknown error type");
  }
  std::optional<std::string> recalled;
  if (!j.at("recalled_knowledge").is_null()) recalled = j["recalled_knowledge"].get<std::string>();
  return {*state, err, j.at("explanation").get<std::string>(), recalled};
}

inline ToolRecord tool_from(const json& j) {
  ToolRecord t{j.at("agent"), j.at("environment_id"), {}, j.at("outcome"), j.at("result")};
  for (const auto& tt : j.at("turns"))
    t.turns.push_back({tt.at("turn"), tt.at("action"), tt.at("observation"), tt.at("warnings")});
  return t;
}

}  // namespace logio

struct LogHeader {
  std::string task_id;
  std::string instruction;
  nlohmann::json config;
  nlohmann::json extra;  // caller-supplied run metadata (pass number, seed, ...)
};

struct LoadedLog {
  LogHeader header;
  EpisodeResult result;
};

inline std::string render_log(const EpisodeResult& r, const EpisodeConfig& cfg, const nlohmann::json& extra = {}) {
  using nlohmann::json;
  std::string out;
  json header{{"schema", kTrajectorySchema}, {"type", "header"}, {"task_id", r.task_id},
              {"instruction", r.trajectory.task_instruction()}, {"config", logio::config_json(cfg)}};
  header["extra"] = extra.is_null() ? json::object() : extra;
  out += header.dump() + "\n";
  for (const auto& s : r.trajectory.steps()) out += logio::step_json(s).dump() + "\n";
  json end{{"type", "end"},
           {"outcome", to_string(r.outcome)},
           {"error", r.error},
           {"tokens", logio::ledger_json(r.tokens)},
           {"unattached", logio::ledger_json(r.unattached)}};
  end["error_code"] = r.error_code ? json(to_string(*r.error_code)) : json(nullptr);
  if (const auto& t = r.trajectory.tutorial())
    end["tutorial"] = {{"steps", t->steps}, {"source_urls", t->source_urls}, {"query", t->query},
                       {"attached_at", *r.trajectory.tutorial_attached_at()}};
  else
    end["tutorial"] = nullptr;
  json knowledge = json::array();
  for (const auto& k : r.trajectory.knowledge().entries())
    knowledge.push_back({{"text", k.text}, {"origin_step", k.origin_step}});
  end["knowledge"] = knowledge;
  out += end.dump() + "\n";
  return out;
}

inline void write_log(const std::filesystem::path& dir, const EpisodeResult& r, const EpisodeConfig& cfg,
                      const nlohmann::json& extra = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  for (const auto& s : r.trajectory.steps()) {
    if (!s.observation.valid()) continue;
    const auto path = dir / "images" / (s.observation.content_hash() + ".png");
    if (fs::exists(path)) continue;
    const auto png = encode_png(s.observation.image());
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!f) fail(ErrorCode::EnvironmentError, "cannot write " + path.string());
  }
  std::ofstream f(dir / "trajectory.jsonl", std::ios::binary);
  f << render_log(r, cfg, extra);
  if (!f) fail(ErrorCode::EnvironmentError, "cannot write " + (dir / "trajectory.jsonl").string());
}

// Accepts the log directory or the .jsonl file inside it.
inline LoadedLog read_log(const std::filesystem::path& where) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  const auto file = fs::is_directory(where) ? where / "trajectory.jsonl" : where;
  const auto dir = file.parent_path();
  std::ifstream in(file, std::ios::binary);
  if (!in) logio::corrupt("cannot open " + file.string());
  std::vector<json> lines;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception& e) {
      logio::corrupt(file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  if (lines.size() < 2) logio::corrupt(file.string() + ": needs a header and an end line");
  LoadedLog out;
  std::map<std::string, Observation> images;
  auto image = [&](const std::string& hash) {
    auto it = images.find(hash);
    if (it != images.end()) return it->second;
    const auto path = dir / "images" / (hash + ".png");
    std::ifstream f(path, std::ios::binary);
    if (!f) logio::corrupt("missing image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Observation o;
    try {
      o = Observation(decode_png(bytes));
    } catch (const Error& e) {
      logio::corrupt("unreadable image " + path.string() + ": " + e.what());
    }
    if (o.content_hash() != hash) logio::corrupt("image " + path.string() + " does not match its hash");
    return images.emplace(hash, o).first->second;
  };

  try {
    const auto& h = lines.front();
    if (h.value("type", "") != "header" || h.value("schema", "") != kTrajectorySchema)
      logio::corrupt(file.string() + ": missing or unknown header");
    out.header = {h.at("task_id"), h.at("instruction"), h.at("config"), h.value("extra", json::object())};
    const auto& end = lines.back();
    if (end.value("type", "") != "end") logio::corrupt(file.string() + ": missing end line");

    auto& r = out.result;
    r.task_id = out.header.task_id;
    r.trajectory = Trajectory(out.header.instruction);
    std::optional<Tutorial> tutorial;
    int attached_at = -1;
    if (!end.at("tutorial").is_null()) {
      const auto& t = end["tutorial"];
      tutorial = Tutorial{t.at("steps"), t.at("source_urls"), t.at("query")};
      attached_at = t.at("attached_at");
    }
    for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
      const auto& j = lines[i];
      if (j.value("type", "") != "step") logio::corrupt("line " + std::to_string(i + 1) + " is not a step");
      if (tutorial && static_cast<int>(r.trajectory.size()) == attached_at) r.trajectory.attach_tutorial(*tutorial);
      Step s;
      s.index = j.at("index");
      if (!j.at("observation").is_null()) {
        s.observation = image(j["observation"].get<std::string>());
        s.observation.set_step_index(s.index);
      }
      s.thought = j.at("thought");
      s.action = parse_action(j.at("action").get<std::string>());
      if (!j.at("grounded").is_null()) {
        GroundedAction g{s.action, {}};
        for (const auto& p : j["grounded"]) g.coordinates.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        s.grounded = std::move(g);
      }
      if (!j.at("summary").is_null()) s.summary = StepSummary{j["summary"].at("text"), j["summary"].at("success")};
      s.milestone = j.at("milestone");
      s.raw_model_output = j.at("raw_model_output");
      if (!j.at("reflection").is_null()) s.reflection = logio::reflection_from(j["reflection"]);
      const auto& sig = j.at("signals");
      if (!sig.at("gui_failure").is_null()) s.signals.gui_failure = sig["gui_failure"].get<bool>();
      if (!sig.at("loop").is_null())
        s.signals.loop = LoopMatch{sig["loop"].at("historical_start"), sig["loop"].at("current_start"),
                                   sig["loop"].at("length")};
      s.signals.coder_pending_verification = sig.at("coder_pending_verification");
      s.note = j.at("note");
      if (!j.at("tool").is_null()) s.tool = logio::tool_from(j["tool"]);
      s.tokens = logio::ledger_from(j.at("tokens"));
      s.context_images = j.at("context_images").get<std::vector<std::string>>();
      s.rma_images = j.at("rma_images").get<std::vector<std::string>>();
      s.temperature = j.at("temperature");
      s.stages = j.at("stages").get<std::vector<std::string>>();
      r.trajectory.append_step(std::move(s));
    }
    if (tutorial && static_cast<int>(r.trajectory.size()) == attached_at && !r.trajectory.tutorial())
      r.trajectory.attach_tutorial(*tutorial);
    for (const auto& k : end.at("knowledge")) r.trajectory.knowledge().add(k.at("text"), k.at("origin_step"));
    const auto outcome = outcome_from_string(end.at("outcome").get<std::string>());
    if (!outcome) logio::corrupt("unknown outcome");
    if (r.trajectory.outcome() == Outcome::running && *outcome != Outcome::running) r.trajectory.close(*outcome);
    if (r.trajectory.outcome() != *outcome) logio::corrupt("end outcome disagrees with the steps");
    r.outcome = *outcome;
    if (!end.at("error_code").is_null()) r.error_code = error_code_from_string(end["error_code"].get<std::string>());
    r.error = end.at("error");
    r.tokens = logio::ledger_from(end.at("tokens"));
    r.unattached = logio::ledger_from(end.at("unattached"));
  } catch (const json::exception& e) {
    logio::corrupt(file.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptLog) throw;
    logio::corrupt(file.string() + ": " + e.what());
  }
  return out;
}

// Rebuilds the loop config recorded in a header.
inline LoopConfig loop_config_from(const nlohmann::json& config) {
  LoopConfig c;
  if (!config.contains("loop")) return c;
  const auto& l = config["loop"];
  c.window = l.value("window", c.window);
  c.phash_hamming_max = l.value("phash_hamming_max", c.phash_hamming_max);
  c.ssim_min = l.value("ssim_min", c.ssim_min);
  c.coord_tolerance_fraction = l.value("coord_tolerance_fraction", c.coord_tolerance_fraction);
  c.levenshtein_min = l.value("levenshtein_min", c.levenshtein_min);
  return c;
}

}  // namespace symphony
