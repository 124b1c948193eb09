#pragma once

// Scripted backends described in JSON, so scenario files can carry their own
// model replies:
//   {"rules": [{"contains": str, "reply": R, "uses": int}], "script": [R...], "fallback": R}
// where R is a string or {"text", "prompt_tokens", "completion_tokens", "error"}.

#include <memory>
#include <string>

#include "json.hpp"
#include "symphony/backends/model.hpp"

namespace symphony {

inline ScriptedReply scripted_reply_from_json(const nlohmann::json& j) {
  if (j.is_string()) return ScriptedReply{j.get<std::string>()};
  if (!j.is_object()) fail(ErrorCode::ConfigError, "scripted reply must be a string or an object");
  ScriptedReply r;
  r.text = j.value("text", std::string{});
  r.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  r.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  if (j.contains("error")) r.error = error_code_from_string(j["error"].get<std::string>());
  return r;
}

inline std::shared_ptr<ScriptedBackend> scripted_from_json(const nlohmann::json& j, std::string name,
                                                           std::size_t image_limit = 8) {
  auto be = std::make_shared<ScriptedBackend>(std::move(name), image_limit);
  try {
    for (const auto& r : j.value("rules", nlohmann::json::array()))
      be->when_contains(r.at("contains").get<std::string>(), scripted_reply_from_json(r.at("reply")),
                        r.value("uses", -1));
    for (const auto& r : j.value("script", nlohmann::json::array())) be->then(scripted_reply_from_json(r));
    if (j.contains("fallback")) be->fallback(scripted_reply_from_json(j["fallback"]));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("malformed scripted model: ") + e.what());
  }
  return be;
}

}  // namespace symphony
