#pragma once

// Backend-neutral multimodal chat exchange, plus the in-process scripted
// backend used by tests and scenarios and a retry wrapper.

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "symphony/error.hpp"
#include "symphony/log.hpp"
#include "symphony/observation.hpp"

namespace symphony {

struct Part {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string text;
  Observation image;  // declared resolution is image.geometry()
  std::string label;  // free-form tag, e.g. "history", "latest", "crop"

  static Part of_text(std::string t) { return {Kind::text, std::move(t), {}, {}}; }
  static Part of_image(Observation o, std::string label = {}) {
    return {Kind::image, {}, std::move(o), std::move(label)};
  }
  bool is_image() const { return kind == Kind::image; }
};

struct Message {
  std::string role;  // "system" | "user" | "assistant"
  std::vector<Part> parts;
};

struct ModelRequest {
  std::vector<Message> messages;
  double temperature = 0.1;
  std::string session;  // one per episode role

  std::size_t image_count() const {
    std::size_t n = 0;
    for (const auto& m : messages)
      for (const auto& p : m.parts) n += p.is_image();
    return n;
  }

  std::vector<const Part*> images() const {
    std::vector<const Part*> out;
    for (const auto& m : messages)
      for (const auto& p : m.parts)
        if (p.is_image()) out.push_back(&p);
    return out;
  }

  std::string all_text() const {
    std::string out;
    for (const auto& m : messages)
      for (const auto& p : m.parts)
        if (!p.is_image()) {
          out += p.text;
          out += '\n';
        }
    return out;
  }
};

struct ModelResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  bool estimated = false;
};

inline std::int64_t estimate_tokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

// Fills in character-based estimates when a backend reported no usage.
inline void ensure_token_counts(const ModelRequest& req, ModelResponse& resp) {
  if (resp.prompt_tokens > 0 || resp.completion_tokens > 0) return;
  resp.prompt_tokens = estimate_tokens(req.all_text());
  resp.completion_tokens = estimate_tokens(resp.text);
  resp.estimated = true;
}

inline void check_request(const ModelRequest& req, std::size_t image_limit) {
  if (req.messages.empty()) fail(ErrorCode::SchemaError, "request has no messages");
  if (req.image_count() > image_limit)
    fail(ErrorCode::SchemaError, "request carries " + std::to_string(req.image_count()) +
                                     " images, limit is " + std::to_string(image_limit));
  for (const auto& m : req.messages)
    for (const auto& p : m.parts)
      if (p.is_image() && !p.image.valid()) fail(ErrorCode::SchemaError, "image part without pixels");
  if (req.temperature < 0.0) fail(ErrorCode::SchemaError, "negative temperature");
}

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual ModelResponse chat(const ModelRequest& req) = 0;
  virtual std::size_t image_limit() const { return 8; }
};

using BackendPtr = std::shared_ptr<ModelBackend>;

// ---------------------------------------------------------------------------

struct ScriptedReply {
  std::string text;
  std::int64_t prompt_tokens = 0;  // 0 and 0 means "estimate"
  std::int64_t completion_tokens = 0;
  std::optional<ErrorCode> error;  // injected fault instead of a reply
};

// Replies are chosen by, in order: the first matching `when_contains` rule
// (rules with a use limit expire), the next queued reply, the fallback. Every
// request is recorded for inspection.
class ScriptedBackend : public ModelBackend {
 public:
  explicit ScriptedBackend(std::string name = "scripted", std::size_t image_limit = 8)
      : name_(std::move(name)), limit_(image_limit) {}

  ScriptedBackend& then(ScriptedReply r) {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(r));
    return *this;
  }
  ScriptedBackend& then(std::string text) { return then(ScriptedReply{std::move(text)}); }

  ScriptedBackend& when_contains(std::string needle, ScriptedReply r, int uses = -1) {
    std::lock_guard lock(mu_);
    rules_.push_back({std::move(needle), std::move(r), uses});
    return *this;
  }

  ScriptedBackend& fallback(ScriptedReply r) {
    std::lock_guard lock(mu_);
    fallback_ = std::move(r);
    return *this;
  }

  ModelResponse chat(const ModelRequest& req) override {
    check_request(req, limit_);
    std::lock_guard lock(mu_);
    requests_.push_back(req);
    const auto reply = pick(req);
    if (reply.error) fail(*reply.error, name_ + ": injected fault");
    ModelResponse resp{reply.text, reply.prompt_tokens, reply.completion_tokens, false};
    ensure_token_counts(req, resp);
    return resp;
  }

  std::size_t image_limit() const override { return limit_; }

  std::vector<ModelRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
  }
  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return queue_.size();
  }

 private:
  struct Rule {
    std::string needle;
    ScriptedReply reply;
    int uses;
  };

  ScriptedReply pick(const ModelRequest& req) {
    const auto text = req.all_text();
    for (auto& r : rules_) {
      if (r.uses == 0 || text.find(r.needle) == std::string::npos) continue;
      if (r.uses > 0) --r.uses;
      return r.reply;
    }
    if (!queue_.empty()) {
      auto r = std::move(queue_.front());
      queue_.pop_front();
      return r;
    }
    if (fallback_) return *fallback_;
    fail(ErrorCode::BackendError, name_ + ": script exhausted");
  }

  std::string name_;
  std::size_t limit_;
  mutable std::mutex mu_;
  std::deque<ScriptedReply> queue_;
  std::vector<Rule> rules_;
  std::optional<ScriptedReply> fallback_;
  std::vector<ModelRequest> requests_;
};

// ---------------------------------------------------------------------------

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// Retries Timeout and RateLimited with exponential backoff; everything else
// propagates on the first failure.
class RetryingBackend : public ModelBackend {
 public:
  RetryingBackend(BackendPtr inner, int max_retries = 3, Sleeper sleep = real_sleep,
                  std::chrono::milliseconds base_delay = std::chrono::milliseconds(500))
      : inner_(std::move(inner)), max_retries_(max_retries), sleep_(std::move(sleep)), base_(base_delay) {}

  ModelResponse chat(const ModelRequest& req) override {
    check_request(req, inner_->image_limit());
    for (int attempt = 0;; ++attempt) {
      try {
        return inner_->chat(req);
      } catch (const Error& e) {
        const bool transient = e.code() == ErrorCode::Timeout || e.code() == ErrorCode::RateLimited;
        if (!transient || attempt >= max_retries_) throw;
        ++retries_;
        log::warn("backend " + std::string(to_string(e.code())) + ", retry " + std::to_string(attempt + 1) +
                  "/" + std::to_string(max_retries_));
        sleep_(base_ * (1 << attempt));
      }
    }
  }

  std::size_t image_limit() const override { return inner_->image_limit(); }
  int retries() const { return retries_; }

 private:
  BackendPtr inner_;
  int max_retries_;
  Sleeper sleep_;
  std::chrono::milliseconds base_;
  std::atomic<int> retries_{0};
};

}  // namespace symphony
