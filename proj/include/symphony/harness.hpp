#pragma once

// Batch runs from a task manifest, Pass@K, offline statistics over logs, and
// replay checks that re-derive what the logs claim.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "symphony/backends/http_backend.hpp"
#include "symphony/env/simulated.hpp"
#include "symphony/scripted_episode.hpp"
#include "symphony/trajectory_log.hpp"

namespace symphony {

inline constexpr std::string_view kManifestSchema = "symphony.manifest/1";

// ---------------------------------------------------------------------------
// Manifest

struct TaskEntry {
  std::string id;
  std::string instruction;  // empty: take it from the scenario
  std::filesystem::path scenario;
  std::optional<int> max_steps;
};

struct ModelEndpoint {
  HttpBackendConfig http;
  int max_retries = 3;
};

struct TaskManifest {
  std::vector<TaskEntry> tasks;
  int runs_per_task = 1;
  double base_temperature = 0.1;
  double temperature_step = 0.1;
  int workers = 1;
  int default_max_steps = 15;
  std::map<std::string, ModelEndpoint> endpoints;  // role -> service; absent roles use scripted models

  void validate() const {
    if (runs_per_task < 1) fail(ErrorCode::ConfigError, "runs_per_task must be >= 1");
    if (workers < 1) fail(ErrorCode::ConfigError, "workers must be >= 1");
    if (base_temperature < 0.0) fail(ErrorCode::ConfigError, "base temperature must be >= 0");
    std::set<std::string> ids;
    for (const auto& t : tasks) {
      if (t.id.empty()) fail(ErrorCode::ConfigError, "task without an id");
      if (!ids.insert(t.id).second) fail(ErrorCode::ConfigError, "duplicate task id " + t.id);
      if (t.max_steps && *t.max_steps < 1) fail(ErrorCode::ConfigError, "max_steps must be >= 1 for " + t.id);
    }
  }

  double temperature_for(int pass) const { return base_temperature + temperature_step * pass; }
};

inline TaskManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  TaskManifest m;
  try {
    if (j.value("schema", "") != kManifestSchema)
      fail(ErrorCode::ConfigError, "manifest schema must be " + std::string(kManifestSchema));
    m.runs_per_task = j.value("runs_per_task", 1);
    m.base_temperature = j.value("base_temperature", 0.1);
    m.temperature_step = j.value("temperature_schedule", 0.1);
    m.workers = j.value("workers", 1);
    m.default_max_steps = j.value("max_steps", 15);
    for (const auto& t : j.at("tasks")) {
      TaskEntry e;
      e.id = t.at("id").get<std::string>();
      e.instruction = t.value("instruction", std::string{});
      std::filesystem::path p = t.at("scenario").get<std::string>();
      e.scenario = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      if (t.contains("max_steps")) e.max_steps = t["max_steps"].get<int>();
      m.tasks.push_back(std::move(e));
    }
    for (const auto& [role, b] : j.value("backends", nlohmann::json::object()).items()) {
      ModelEndpoint ep;
      ep.http.base_url = b.at("base_url").get<std::string>();
      ep.http.path = b.value("path", ep.http.path);
      ep.http.model = b.value("model", std::string{});
      ep.http.api_key_env = b.value("api_key_env", std::string{});
      ep.http.timeout_seconds = b.value("timeout_seconds", ep.http.timeout_seconds);
      ep.max_retries = b.value("max_retries", ep.max_retries);
      m.endpoints[role] = std::move(ep);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

inline TaskManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::ConfigError, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, "manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
  std::string task_id;
  int pass = 0;
  double temperature = 0.0;
  Outcome outcome = Outcome::aborted;
  bool success = false;
  int steps = 0;
  std::string error;
  std::filesystem::path log_dir;
};

struct RunSummary {
  std::vector<RunRecord> runs;  // task order, then pass order
  bool any_failures() const {
    return std::any_of(runs.begin(), runs.end(), [](const RunRecord& r) { return !r.success; });
  }
};

inline std::string pass_dir_name(int pass) { return "pass-" + std::to_string(pass + 1); }

inline EpisodeBackends backends_for(const TaskManifest& m, const Scenario& s) {
  auto b = scripted_models(s.models).backends;
  auto pick = [&](const char* role, BackendPtr& slot) {
    auto it = m.endpoints.find(role);
    if (it == m.endpoints.end()) return;
    slot = std::make_shared<RetryingBackend>(std::make_shared<HttpBackend>(it->second.http), it->second.max_retries);
  };
  pick("orchestrator", b.orchestrator);
  pick("rma", b.rma);
  pick("summarizer", b.summarizer);
  pick("grounder", b.grounder);
  pick("searcher", b.searcher);
  pick("coder", b.coder);
  return b;
}

inline RunRecord run_one(const TaskManifest& m, const TaskEntry& task, int pass, const std::filesystem::path& out_dir,
                         const EpisodeConfig& base_cfg) {
  RunRecord rec;
  rec.task_id = task.id;
  rec.pass = pass;
  rec.temperature = m.temperature_for(pass);
  rec.log_dir = out_dir / task.id / pass_dir_name(pass);
  try {
    const auto scenario = load_scenario(task.scenario);
    SimulatedEnvironment env(scenario);
    auto cfg = base_cfg;
    cfg.orchestrator.temperature = rec.temperature;
    cfg.rma.temperature = rec.temperature;
    cfg.orchestrator.max_steps = task.max_steps.value_or(scenario.max_steps > 0 ? scenario.max_steps : m.default_max_steps);
    const auto instruction = task.instruction.empty() ? scenario.instruction : task.instruction;
    auto res = run_episode(task.id, instruction, env, env.sandbox_factory(), backends_for(m, scenario), cfg);
    rec.outcome = res.outcome;
    rec.success = env.succeeded();
    rec.steps = static_cast<int>(res.trajectory.size());
    rec.error = res.error;
    write_log(rec.log_dir, res, cfg,
              {{"pass", pass + 1}, {"temperature", rec.temperature}, {"success", rec.success}});
  } catch (const Error& e) {
    rec.outcome = Outcome::aborted;
    rec.error = e.what();
    rec.log_dir.clear();
    log::warn("task " + task.id + " pass " + std::to_string(pass + 1) + " skipped: " + rec.error);
  }
  return rec;
}

inline RunSummary run_manifest(const TaskManifest& m, const std::filesystem::path& out_dir,
                               const EpisodeConfig& base_cfg = {}) {
  m.validate();
  RunSummary summary;
  const std::size_t passes = static_cast<std::size_t>(m.runs_per_task);
  summary.runs.resize(m.tasks.size() * passes);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < summary.runs.size(); job = next++) {
      const auto& task = m.tasks[job / passes];
      summary.runs[job] = run_one(m, task, static_cast<int>(job % passes), out_dir, base_cfg);
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(m.workers), std::max<std::size_t>(1, summary.runs.size()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return summary;
}

inline nlohmann::json summary_json(const RunSummary& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs)
    runs.push_back({{"task_id", r.task_id},
                    {"pass", r.pass + 1},
                    {"temperature", r.temperature},
                    {"outcome", to_string(r.outcome)},
                    {"success", r.success},
                    {"steps", r.steps},
                    {"error", r.error},
                    {"log", r.log_dir.string()}});
  return {{"runs", runs}};
}

// ---------------------------------------------------------------------------
// Pass@K

using TaskResults = std::map<std::string, std::vector<bool>>;

// Fraction of tasks with at least one success among their first k runs.
inline double pass_at_k(const TaskResults& results, int k) {
  if (k < 1) fail(ErrorCode::Precondition, "k must be >= 1");
  if (results.empty()) fail(ErrorCode::InsufficientRuns, "no tasks");
  std::size_t solved = 0;
  for (const auto& [task, runs] : results) {
    if (runs.size() < static_cast<std::size_t>(k))
      fail(ErrorCode::InsufficientRuns, task + " has " + std::to_string(runs.size()) + " runs, need " + std::to_string(k));
    if (std::any_of(runs.begin(), runs.begin() + k, [](bool b) { return b; })) ++solved;
  }
  return static_cast<double>(solved) / static_cast<double>(results.size());
}

// ---------------------------------------------------------------------------
// Stats

inline const std::array<std::string, 3> kCrosstabRows = {"GUI signal", "Loop signal", "Normal"};
inline const std::array<std::string, 5> kCrosstabCols = {"GUIError", "LackOfTutorial", "CodeError", "OtherError",
                                                          "Normal"};

struct StatsReport {
  std::map<int, double> pass_at_k;
  std::map<std::string, std::size_t> action_counts;
  std::map<std::string, double> action_fractions;
  TokenLedger token_totals;  // sum of per-step ledgers plus unattached spend
  std::map<std::string, std::map<std::string, std::size_t>> crosstab;
  std::map<std::string, std::size_t> signal_counts;
  std::map<int, std::size_t> steps_success;  // episode length -> episodes
  std::map<int, std::size_t> steps_failure;
  std::size_t episodes = 0;
  std::vector<std::string> skipped;                // unreadable logs
  std::vector<std::string> conservation_mismatch;  // logs whose end totals disagree with their steps

  nlohmann::json to_json() const;
  std::string render() const;
};

inline nlohmann::json StatsReport::to_json() const {
  using nlohmann::json;
  json j;
  json pk = json::object();
  for (const auto& [k, v] : pass_at_k) pk[std::to_string(k)] = v;
  j["pass_at_k"] = pk;
  json hist = json::object();
  for (const auto& [a, c] : action_counts) hist[a] = {{"count", c}, {"fraction", action_fractions.at(a)}};
  j["action_histogram"] = hist;
  json tokens = json::object();
  for (const auto& [role, u] : token_totals) tokens[role] = {{"prompt", u.prompt}, {"completion", u.completion}};
  j["token_totals"] = tokens;
  j["protocol_crosstab"] = crosstab;
  j["signal_counts"] = signal_counts;
  json ss = json::object(), sf = json::object();
  for (const auto& [n, c] : steps_success) ss[std::to_string(n)] = c;
  for (const auto& [n, c] : steps_failure) sf[std::to_string(n)] = c;
  j["step_distributions"] = {{"success", ss}, {"failure", sf}};
  j["episodes"] = episodes;
  j["skipped"] = skipped;
  j["conservation_mismatch"] = conservation_mismatch;
  return j;
}

inline std::string StatsReport::render() const {
  char buf[160];
  std::string out = "Episodes: " + std::to_string(episodes) + "\n\nPass@K\n";
  for (const auto& [k, v] : pass_at_k) {
    std::snprintf(buf, sizeof buf, "  pass@%d  %.4f\n", k, v);
    out += buf;
  }
  out += "\nActions\n";
  for (const auto& [a, c] : action_counts) {
    std::snprintf(buf, sizeof buf, "  %-22s %6zu  %.4f\n", a.c_str(), c, action_fractions.at(a));
    out += buf;
  }
  out += "\nTokens (prompt / completion)\n";
  for (const auto& [role, u] : token_totals) {
    std::snprintf(buf, sizeof buf, "  %-14s %10lld / %lld%s\n", role.c_str(), static_cast<long long>(u.prompt),
                  static_cast<long long>(u.completion), u.estimated ? "  (estimated)" : "");
    out += buf;
  }
  out += "\nProtocol cross-tab\n  " + std::string(13, ' ');
  for (const auto& c : kCrosstabCols) {
    std::snprintf(buf, sizeof buf, "%15s", c.c_str());
    out += buf;
  }
  out += "\n";
  for (const auto& r : kCrosstabRows) {
    std::snprintf(buf, sizeof buf, "  %-13s", r.c_str());
    out += buf;
    for (const auto& c : kCrosstabCols) {
      std::snprintf(buf, sizeof buf, "%15zu", crosstab.at(r).at(c));
      out += buf;
    }
    out += "\n";
  }
  out += "\nSteps per episode (success)\n";
  for (const auto& [n, c] : steps_success) out += "  " + std::to_string(n) + ": " + std::to_string(c) + "\n";
  out += "Steps per episode (failure)\n";
  for (const auto& [n, c] : steps_failure) out += "  " + std::to_string(n) + ": " + std::to_string(c) + "\n";
  for (const auto& s : skipped) out += "skipped: " + s + "\n";
  for (const auto& s : conservation_mismatch) out += "token mismatch: " + s + "\n";
  return out;
}

inline std::string crosstab_column(const ReflectionMessage& m) {
  if (m.state() != ReflectionState::OffTrack) return "Normal";
  return std::string(to_string(*m.error_type()));
}

inline bool log_success(const LoadedLog& l) {
  if (l.header.extra.contains("success")) return l.header.extra["success"].get<bool>();
  return l.result.outcome == Outcome::done;
}

inline int log_pass(const LoadedLog& l) { return l.header.extra.value("pass", 1); }

// Pure over the logs given; order of `logs` does not matter.
inline StatsReport compute_stats(const std::vector<LoadedLog>& logs) {
  StatsReport rep;
  for (const auto& r : kCrosstabRows)
    for (const auto& c : kCrosstabCols) rep.crosstab[r][c] = 0;
  for (const auto& r : kCrosstabRows) rep.signal_counts[r] = 0;

  std::map<std::string, std::map<int, bool>> by_task;
  std::size_t actions = 0;
  for (const auto& l : logs) {
    ++rep.episodes;
    const auto& traj = l.result.trajectory;
    const bool ok = log_success(l);
    by_task[l.result.task_id][log_pass(l)] = ok;
    (ok ? rep.steps_success : rep.steps_failure)[static_cast<int>(traj.size())]++;
    const auto attributed = attributed_tokens(l.result);
    merge(rep.token_totals, attributed);
    if (attributed != l.result.tokens) rep.conservation_mismatch.push_back(l.result.task_id + " pass " + std::to_string(log_pass(l)));
    for (const auto& s : traj.steps()) {
      rep.action_counts[std::string(name_of(kind_of(s.action)))]++;
      ++actions;
      if (!s.reflection) continue;
      const auto col = crosstab_column(*s.reflection);
      const bool gui = s.signals.gui_failure.value_or(false);
      const bool loop = s.signals.loop.has_value();
      if (gui) {
        rep.crosstab["GUI signal"][col]++;
        rep.signal_counts["GUI signal"]++;
      }
      if (loop) {
        rep.crosstab["Loop signal"][col]++;
        rep.signal_counts["Loop signal"]++;
      }
      if (!gui && !loop) {
        rep.crosstab["Normal"][col]++;
        rep.signal_counts["Normal"]++;
      }
    }
  }
  for (const auto& [a, c] : rep.action_counts)
    rep.action_fractions[a] = static_cast<double>(c) / static_cast<double>(actions);

  TaskResults results;
  std::size_t min_runs = SIZE_MAX;
  for (const auto& [task, passes] : by_task) {
    auto& v = results[task];
    for (const auto& [p, ok] : passes) v.push_back(ok);
    min_runs = std::min(min_runs, v.size());
  }
  if (!results.empty())
    for (int k = 1; k <= static_cast<int>(min_runs); ++k) rep.pass_at_k[k] = pass_at_k(results, k);
  return rep;
}

// Every trajectory.jsonl below `root`; unreadable ones are skipped with a warning.
inline std::vector<LoadedLog> load_logs(const std::filesystem::path& root, std::vector<std::string>* skipped = nullptr) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else if (fs::is_directory(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() == "trajectory.jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LoadedLog> out;
  for (const auto& f : files) {
    try {
      out.push_back(read_log(f));
    } catch (const Error& e) {
      log::warn(std::string("skipping log: ") + e.what());
      if (skipped) skipped->push_back(f.string());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replay

struct Divergence {
  int step = -1;
  std::string check;
  std::string detail;
};

struct ReplayReport {
  std::vector<Divergence> divergences;
  std::size_t checks = 0;
  bool clean() const { return divergences.empty(); }
  std::string render() const {
    std::string out = std::to_string(checks) + " checks, " + std::to_string(divergences.size()) + " divergences\n";
    for (const auto& d : divergences)
      out += "  step " + std::to_string(d.step) + " [" + d.check + "] " + d.detail + "\n";
    return out;
  }
};

namespace detail {

inline std::string loop_text(const std::optional<LoopMatch>& m) {
  if (!m) return "none";
  return std::to_string(m->historical_start) + ".." + std::to_string(m->historical_start + m->length - 1) + " ~ " +
         std::to_string(m->current_start) + ".." + std::to_string(m->current_start + m->length - 1);
}

}  // namespace detail

inline ReplayReport replay(const LoadedLog& log) {
  ReplayReport rep;
  const auto& steps = log.result.trajectory.steps();
  const auto loop_cfg = loop_config_from(log.header.config);
  const std::size_t max_images = log.header.config.value("max_images", std::size_t{8});
  auto diverge = [&](int step, std::string check, std::string detail) {
    rep.divergences.push_back({step, std::move(check), std::move(detail)});
  };

  Trajectory prefix(log.result.trajectory.task_instruction());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const int idx = static_cast<int>(i);

    if (s.reflection) {
      // loop detection over the steps that existed when this one started
      std::optional<LoopMatch> again;
      try {
        again = detect_loop(std::span<const Step>(steps).first(i), loop_cfg);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::MissingCoordinates) throw;
      }
      ++rep.checks;
      if (again != s.signals.loop)
        diverge(idx, "loop", "recorded " + detail::loop_text(s.signals.loop) + ", replay " + detail::loop_text(again));

      // milestone gating
      const auto mem = long_term_view(prefix);
      std::vector<std::string> want;
      for (auto e : select_milestone_images(mem, max_images - 1)) want.push_back(mem.entries[e].screenshot->content_hash());
      ++rep.checks;
      if (want != s.rma_images)
        diverge(idx, "milestones", "RMA saw " + std::to_string(s.rma_images.size()) + " history images, gating gives " +
                                       std::to_string(want.size()));

      ++rep.checks;
      try {
        auto back = classify_reflection(format_reflection(*s.reflection));
        if (back.state() != s.reflection->state() || back.error_type() != s.reflection->error_type())
          diverge(idx, "reflection", "reflection does not survive format/parse");
      } catch (const Error& e) {
        diverge(idx, "reflection", e.what());
      }
    }

    ++rep.checks;
    if (s.context_images.size() > max_images)
      diverge(idx, "budget", "orchestrator context holds " + std::to_string(s.context_images.size()) + " images");
    ++rep.checks;
    if (s.rma_images.size() + (s.reflection ? 1 : 0) > max_images)
      diverge(idx, "budget", "RMA request holds " + std::to_string(s.rma_images.size() + 1) + " images");

    ++rep.checks;
    try {
      if (!(parse_action(format_action(s.action)) == s.action)) diverge(idx, "action", "format/parse changes the action");
    } catch (const Error& e) {
      diverge(idx, "action", e.what());
    }
    if (!s.raw_model_output.empty()) {
      ++rep.checks;
      try {
        if (!(parse_decision(s.raw_model_output).action == s.action))
          diverge(idx, "decision", "raw output parses to a different action");
      } catch (const Error& e) {
        diverge(idx, "decision", e.what());
      }
    }

    auto copy = s;
    prefix.append_step(std::move(copy));
  }

  ++rep.checks;
  if (attributed_tokens(log.result) != log.result.tokens) diverge(-1, "tokens", "step ledgers do not sum to the totals");
  return rep;
}

}  // namespace symphony
