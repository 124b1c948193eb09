#pragma once

// HTTP client for chat-completions style inference services. Plain HTTP by
// default; define CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL::SSL) before
// including this header for https endpoints.

#include <cstdlib>
#include <mutex>
#include <string>

#include "httplib.h"
#include "symphony/backends/model.hpp"
#include "symphony/backends/wire.hpp"

namespace symphony {

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";  // scheme://host:port
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;  // name of the env var holding a bearer token
  int timeout_seconds = 120;
  std::size_t image_limit = 8;
};

class HttpBackend : public ModelBackend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)), client_(cfg_.base_url) {
    client_.set_read_timeout(cfg_.timeout_seconds, 0);
    client_.set_write_timeout(cfg_.timeout_seconds, 0);
    client_.set_connection_timeout(10, 0);
    if (!cfg_.api_key_env.empty()) {
      if (const char* key = std::getenv(cfg_.api_key_env.c_str())) client_.set_bearer_token_auth(key);
    }
  }

  ModelResponse chat(const ModelRequest& req) override {
    check_request(req, cfg_.image_limit);
    const auto body = wire::request_to_json(req, cfg_.model).dump();
    httplib::Result res;
    {
      // one request in flight per client keeps a session's turns ordered
      std::lock_guard lock(mu_);
      res = client_.Post(cfg_.path, body, "application/json");
    }
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
        fail(ErrorCode::Timeout, "request timed out: " + httplib::to_string(err));
      fail(ErrorCode::BackendError, "transport error: " + httplib::to_string(err));
    }
    const int status = res->status;
    if (status == 429) fail(ErrorCode::RateLimited, "rate limited");
    if (status == 408 || status == 504) fail(ErrorCode::Timeout, "server timeout " + std::to_string(status));
    if (status == 400 || status == 413 || status == 422)
      fail(ErrorCode::SchemaError, "request rejected with " + std::to_string(status) + ": " + res->body);
    if (status < 200 || status >= 300) fail(ErrorCode::BackendError, "HTTP " + std::to_string(status));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::SchemaError, std::string("response is not JSON: ") + e.what());
    }
    auto out = wire::response_from_json(j);
    ensure_token_counts(req, out);
    return out;
  }

  std::size_t image_limit() const override { return cfg_.image_limit; }

 private:
  HttpBackendConfig cfg_;
  httplib::Client client_;
  std::mutex mu_;
};

}  // namespace symphony
