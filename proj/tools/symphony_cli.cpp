// symphony run | replay | stats | loop-detect
// Exit codes: 0 ok, 1 task failures or divergences, 2 configuration error.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "symphony/symphony.hpp"

namespace fs = std::filesystem;
using namespace symphony;

namespace {

constexpr int kOk = 0, kFailures = 1, kConfig = 2;

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) fail(ErrorCode::ConfigError, "cannot write " + p.string());
}

int cmd_run(const fs::path& manifest_path, const fs::path& out, std::optional<int> workers, std::optional<int> runs,
            const std::string& summary_path) {
  auto m = load_manifest(manifest_path);
  if (workers) m.workers = *workers;
  if (runs) m.runs_per_task = *runs;
  m.validate();
  const auto summary = run_manifest(m, out);
  const auto text = summary_json(summary).dump(2) + "\n";
  if (summary_path.empty())
    std::cout << text;
  else
    write_file(summary_path, text);
  std::size_t ok = 0;
  for (const auto& r : summary.runs) ok += r.success ? 1 : 0;
  std::cerr << ok << "/" << summary.runs.size() << " runs succeeded; logs in " << out.string() << "\n";
  return summary.any_failures() ? kFailures : kOk;
}

int cmd_replay(const std::vector<std::string>& paths) {
  bool clean = true;
  for (const auto& p : paths) {
    const auto rep = replay(read_log(p));
    std::cout << p << ": " << rep.render();
    clean = clean && rep.clean();
  }
  return clean ? kOk : kFailures;
}

int cmd_stats(const fs::path& root, const std::string& out_dir) {
  std::vector<std::string> skipped;
  const auto logs = load_logs(root, &skipped);
  if (logs.empty()) fail(ErrorCode::ConfigError, "no readable logs under " + root.string());
  auto rep = compute_stats(logs);
  rep.skipped = skipped;
  std::cout << rep.render();
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    write_file(dir / "stats.json", rep.to_json().dump(2) + "\n");
    std::string hist = "action,count,fraction\n";
    for (const auto& [a, c] : rep.action_counts) hist += a + "," + std::to_string(c) + "," + std::to_string(rep.action_fractions.at(a)) + "\n";
    write_file(dir / "action_histogram.csv", hist);
    std::string steps = "steps,success,failure\n";
    std::set<int> lengths;
    for (const auto& [n, c] : rep.steps_success) lengths.insert(n);
    for (const auto& [n, c] : rep.steps_failure) lengths.insert(n);
    for (int n : lengths) {
      auto get = [n](const std::map<int, std::size_t>& m) { auto it = m.find(n); return it == m.end() ? 0 : it->second; };
      steps += std::to_string(n) + "," + std::to_string(get(rep.steps_success)) + "," + std::to_string(get(rep.steps_failure)) + "\n";
    }
    write_file(dir / "step_distribution.csv", steps);
    std::string pk = "k,pass_rate\n";
    for (const auto& [k, v] : rep.pass_at_k) pk += std::to_string(k) + "," + std::to_string(v) + "\n";
    write_file(dir / "pass_at_k.csv", pk);
  }
  return rep.conservation_mismatch.empty() ? kOk : kFailures;
}

int cmd_loop_detect(const fs::path& path, std::optional<int> window) {
  const auto l = read_log(path);
  auto cfg = loop_config_from(l.header.config);
  if (window) cfg.window = *window;
  cfg.validate();
  const auto& steps = l.result.trajectory.steps();
  bool any = false;
  for (std::size_t i = 1; i <= steps.size(); ++i) {
    std::optional<LoopMatch> m;
    try {
      m = detect_loop(std::span<const Step>(steps).first(i), cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingCoordinates) throw;
    }
    if (!m) continue;
    any = true;
    std::cout << "after step " << i - 1 << ": steps " << m->historical_start << ".."
              << m->historical_start + m->length - 1 << " repeat as " << m->current_start << ".."
              << m->current_start + m->length - 1 << "\n";
  }
  if (!any) std::cout << "no loops\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run, replay and analyse computer-use agent episodes"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* run = app.add_subcommand("run", "Run every task in a manifest");
  std::string manifest, out = "runs", summary;
  std::optional<int> workers, runs;
  run->add_option("manifest", manifest, "Task manifest (symphony.manifest/1)")->required();
  run->add_option("-o,--out", out, "Directory for trajectory logs");
  run->add_option("-w,--workers", workers, "Parallel episodes");
  run->add_option("-n,--runs", runs, "Runs per task (overrides the manifest)");
  run->add_option("--summary", summary, "Write the run summary JSON here instead of stdout");

  auto* rep = app.add_subcommand("replay", "Re-check recorded trajectories");
  std::vector<std::string> logs;
  rep->add_option("logs", logs, "Log directories or trajectory.jsonl files")->required();

  auto* st = app.add_subcommand("stats", "Statistics over a tree of logs");
  std::string root, stats_out;
  st->add_option("root", root, "Directory holding trajectory logs")->required();
  st->add_option("-o,--out", stats_out, "Write stats.json and CSV tables here");

  auto* ld = app.add_subcommand("loop-detect", "Print every loop the detector finds in a log");
  std::string ld_log;
  std::optional<int> window;
  ld->add_option("log", ld_log, "Log directory or trajectory.jsonl")->required();
  ld->add_option("-N,--window", window, "Window length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (verbose) log::set_level(log::Level::debug);

  try {
    if (*run) return cmd_run(manifest, out, workers, runs, summary);
    if (*rep) return cmd_replay(logs);
    if (*st) return cmd_stats(root, stats_out);
    if (*ld) return cmd_loop_detect(ld_log, window);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}
