#pragma once

// JSON chat wire in the common role/content-parts shape. Images travel as
// base64 PNG data URLs with their declared width and height alongside.

#include "json.hpp"

#include "symphony/backends/model.hpp"
#include "symphony/image.hpp"

namespace symphony::wire {

using nlohmann::json;

inline constexpr std::string_view kPngDataPrefix = "data:image/png;base64,";

inline json image_to_json(const Observation& obs, const std::string& label) {
  const auto& img = obs.image();
  json j = {{"type", "image_url"},
            {"image_url", {{"url", std::string(kPngDataPrefix) + base64_encode(encode_png(img))}}},
            {"width", img.width()},
            {"height", img.height()}};
  if (!label.empty()) j["label"] = label;
  return j;
}

inline Observation image_from_json(const json& j) {
  const auto url = j.at("image_url").at("url").get<std::string>();
  if (url.rfind(kPngDataPrefix, 0) != 0) fail(ErrorCode::SchemaError, "image part is not a PNG data URL");
  auto img = decode_png(base64_decode(std::string_view(url).substr(kPngDataPrefix.size())));
  if (j.contains("width") && (j["width"].get<int>() != img.width() || j["height"].get<int>() != img.height()))
    fail(ErrorCode::SchemaError, "declared image size does not match the PNG");
  return Observation(std::move(img));
}

inline json request_to_json(const ModelRequest& req, const std::string& model = {}) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    json content = json::array();
    for (const auto& p : m.parts) {
      if (p.is_image())
        content.push_back(image_to_json(p.image, p.label));
      else
        content.push_back({{"type", "text"}, {"text", p.text}});
    }
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  json j = {{"messages", messages}, {"temperature", req.temperature}};
  if (!model.empty()) j["model"] = model;
  if (!req.session.empty()) j["user"] = req.session;
  return j;
}

inline ModelRequest request_from_json(const json& j) {
  try {
    ModelRequest req;
    req.temperature = j.value("temperature", 0.1);
    req.session = j.value("user", std::string{});
    for (const auto& m : j.at("messages")) {
      Message msg;
      msg.role = m.at("role").get<std::string>();
      const auto& content = m.at("content");
      if (content.is_string()) {
        msg.parts.push_back(Part::of_text(content.get<std::string>()));
      } else {
        for (const auto& p : content) {
          const auto type = p.at("type").get<std::string>();
          if (type == "text")
            msg.parts.push_back(Part::of_text(p.at("text").get<std::string>()));
          else if (type == "image_url")
            msg.parts.push_back(Part::of_image(image_from_json(p), p.value("label", std::string{})));
          else
            fail(ErrorCode::SchemaError, "unknown content part type: " + type);
        }
      }
      req.messages.push_back(std::move(msg));
    }
    return req;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("malformed request: ") + e.what());
  }
}

inline json response_to_json(const ModelResponse& r) {
  json j = {{"choices", json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", r.text}}}}})}};
  if (!r.estimated)
    j["usage"] = {{"prompt_tokens", r.prompt_tokens}, {"completion_tokens", r.completion_tokens}};
  return j;
}

inline ModelResponse response_from_json(const json& j) {
  try {
    ModelResponse r;
    const auto& msg = j.at("choices").at(0).at("message");
    r.text = msg.at("content").is_null() ? std::string{} : msg.at("content").get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      r.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
      r.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    if (r.text.empty()) fail(ErrorCode::BackendError, "empty completion");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("malformed response: ") + e.what());
  }
}

// Structural equality used by round-trip checks; images compare by pixels.
inline bool same_request(const ModelRequest& a, const ModelRequest& b) {
  if (a.temperature != b.temperature || a.session != b.session || a.messages.size() != b.messages.size())
    return false;
  for (std::size_t i = 0; i < a.messages.size(); ++i) {
    const auto& ma = a.messages[i];
    const auto& mb = b.messages[i];
    if (ma.role != mb.role || ma.parts.size() != mb.parts.size()) return false;
    for (std::size_t k = 0; k < ma.parts.size(); ++k) {
      const auto& pa = ma.parts[k];
      const auto& pb = mb.parts[k];
      if (pa.kind != pb.kind || pa.text != pb.text || pa.label != pb.label) return false;
      if (pa.is_image() && !(pa.image.image() == pb.image.image())) return false;
    }
  }
  return true;
}

}  // namespace symphony::wire
