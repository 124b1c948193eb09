#pragma once

// Episode backends built from a scenario's "models" block. A role without an
// entry falls back to "default", then to a backend that always fails.

#include "symphony/backends/scripted_spec.hpp"
#include "symphony/episode.hpp"

namespace symphony {

struct ScriptedModels {
  std::map<std::string, std::shared_ptr<ScriptedBackend>> by_role;
  EpisodeBackends backends;
};

inline ScriptedModels scripted_models(const nlohmann::json& models) {
  static const std::array<const char*, 6> roles = {"orchestrator", "rma", "summarizer", "grounder", "searcher", "coder"};
  ScriptedModels out;
  for (const auto* role : roles) {
    nlohmann::json spec = models.contains(role) ? models[role] : models.value("default", nlohmann::json::object());
    out.by_role[role] = scripted_from_json(spec, role);
  }
  auto& b = out.backends;
  b.orchestrator = out.by_role["orchestrator"];
  b.rma = out.by_role["rma"];
  b.summarizer = out.by_role["summarizer"];
  b.grounder = out.by_role["grounder"];
  b.searcher = out.by_role["searcher"];
  b.coder = out.by_role["coder"];
  return out;
}

}  // namespace symphony
