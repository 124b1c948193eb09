#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "symphony/backends/http_backend.hpp"
#include "symphony/backends/model.hpp"
#include "symphony/backends/wire.hpp"

using namespace symphony;
using nlohmann::json;

namespace {

Observation tiny_image(std::uint8_t shade) {
  Image img(6, 4, Rgb{shade, 20, 200});
  img.set(1, 1, Rgb{255, 255, 255});
  return Observation(std::move(img));
}

ModelRequest with_images(int n) {
  ModelRequest req;
  Message m{"user", {Part::of_text("look")}};
  for (int i = 0; i < n; ++i) m.parts.push_back(Part::of_image(tiny_image(static_cast<std::uint8_t>(i * 10))));
  req.messages.push_back(std::move(m));
  return req;
}

ModelRequest sample_request() {
  ModelRequest req;
  req.temperature = 0.3;
  req.session = "episode-7/reflection";
  req.messages.push_back({"system", {Part::of_text("You are a careful agent.")}});
  req.messages.push_back({"user",
                          {Part::of_text("Step 0"), Part::of_image(tiny_image(40), "history"),
                           Part::of_text("now"), Part::of_image(tiny_image(90), "latest")}});
  req.messages.push_back({"assistant", {Part::of_text("(Answer)\nok")}});
  return req;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::EnvironmentError;
}

}  // namespace

TEST(Scripted, LookupIsDeterministic) {
  ScriptedBackend b;
  b.then(ScriptedReply{"first", 11, 3}).when_contains("magic", ScriptedReply{"rule", 5, 2}, 1).fallback({"later"});
  ModelRequest req{{{"user", {Part::of_text("hello")}}}};
  ModelRequest magic{{{"user", {Part::of_text("magic word")}}}};
  auto r = b.chat(req);
  EXPECT_EQ(r.text, "first");
  EXPECT_EQ(r.prompt_tokens, 11);
  EXPECT_EQ(r.completion_tokens, 3);
  EXPECT_FALSE(r.estimated);
  EXPECT_EQ(b.chat(magic).text, "rule");
  EXPECT_EQ(b.chat(magic).text, "later");  // rule used up
  EXPECT_EQ(b.calls(), 3u);
}

TEST(Scripted, MissingUsageIsEstimated) {
  ScriptedBackend b;
  b.then("12345678");
  ModelRequest req{{{"user", {Part::of_text("abcdefghijk")}}}};
  const auto r = b.chat(req);
  EXPECT_TRUE(r.estimated);
  EXPECT_EQ(r.completion_tokens, 2);
  EXPECT_EQ(r.prompt_tokens, 3);  // 12 chars including the separator
}

TEST(Scripted, ExhaustedScriptIsBackendError) {
  ScriptedBackend b;
  ModelRequest req{{{"user", {Part::of_text("x")}}}};
  EXPECT_EQ(code_of([&] { b.chat(req); }), ErrorCode::BackendError);
}

TEST(Scripted, TooManyImagesRejectedBeforeAnyCall) {
  auto inner = std::make_shared<ScriptedBackend>();
  inner->fallback({"never"});
  RetryingBackend b(inner, 3, [](auto) {});
  EXPECT_EQ(code_of([&] { b.chat(with_images(9)); }), ErrorCode::SchemaError);
  EXPECT_EQ(inner->calls(), 0u);
  EXPECT_NO_THROW(b.chat(with_images(8)));
}

TEST(Scripted, RequestShapeChecks) {
  ScriptedBackend b;
  b.fallback({"x"});
  EXPECT_EQ(code_of([&] { b.chat(ModelRequest{}); }), ErrorCode::SchemaError);
  auto neg = with_images(0);
  neg.temperature = -0.1;
  EXPECT_EQ(code_of([&] { b.chat(neg); }), ErrorCode::SchemaError);
}

TEST(Retry, TransientTimeoutThenSuccess) {
  auto inner = std::make_shared<ScriptedBackend>();
  inner->then(ScriptedReply{"", 0, 0, ErrorCode::Timeout}).then("recovered");
  std::vector<std::chrono::milliseconds> waits;
  RetryingBackend b(inner, 3, [&](auto d) { waits.push_back(d); });
  log::Capture cap;
  EXPECT_EQ(b.chat(with_images(1)).text, "recovered");
  EXPECT_EQ(b.retries(), 1);
  EXPECT_EQ(inner->calls(), 2u);
  ASSERT_EQ(waits.size(), 1u);
  EXPECT_TRUE(cap.contains("retry 1/3"));
}

TEST(Retry, BudgetNeverExceeded) {
  auto inner = std::make_shared<ScriptedBackend>();
  inner->fallback({"", 0, 0, ErrorCode::RateLimited});
  std::vector<std::chrono::milliseconds> waits;
  RetryingBackend b(inner, 3, [&](auto d) { waits.push_back(d); }, std::chrono::milliseconds(100));
  log::Capture cap;
  EXPECT_EQ(code_of([&] { b.chat(with_images(0)); }), ErrorCode::RateLimited);
  EXPECT_EQ(inner->calls(), 4u);
  EXPECT_EQ(b.retries(), 3);
  EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(100),
                                                           std::chrono::milliseconds(200),
                                                           std::chrono::milliseconds(400)}));
}

TEST(Retry, FatalErrorsNeverRetried) {
  for (auto code : {ErrorCode::SchemaError, ErrorCode::BackendError}) {
    auto inner = std::make_shared<ScriptedBackend>();
    inner->then(ScriptedReply{"", 0, 0, code}).then("unreachable");
    RetryingBackend b(inner, 3, [](auto) {});
    EXPECT_EQ(code_of([&] { b.chat(with_images(0)); }), code);
    EXPECT_EQ(inner->calls(), 1u);
    EXPECT_EQ(b.retries(), 0);
  }
}

TEST(Wire, RequestRoundTrip) {
  const auto req = sample_request();
  const auto j = wire::request_to_json(req, "some-model");
  EXPECT_EQ(j["model"], "some-model");
  EXPECT_EQ(j["user"], "episode-7/reflection");
  EXPECT_EQ(j["messages"][1]["content"][1]["type"], "image_url");
  EXPECT_EQ(j["messages"][1]["content"][1]["width"], 6);
  const auto back = wire::request_from_json(json::parse(j.dump()));
  EXPECT_TRUE(wire::same_request(req, back));
  EXPECT_EQ(wire::request_to_json(back, "some-model"), j);
}

TEST(Wire, GoldenFile) {
  const std::string path = std::string(SYMPHONY_FIXTURE_DIR) + "/wire_request.json";
  const auto fresh = wire::request_to_json(sample_request(), "some-model");
  if (std::getenv("SYMPHONY_REGEN_GOLDEN")) {
    std::ofstream(path) << fresh.dump(2) << '\n';
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << path;
  const auto golden = json::parse(in);
  EXPECT_EQ(golden, fresh);
  const auto req = wire::request_from_json(golden);
  EXPECT_TRUE(wire::same_request(req, sample_request()));
  EXPECT_EQ(wire::request_to_json(req, "some-model"), golden);
}

TEST(Wire, RejectsMalformed) {
  EXPECT_EQ(code_of([] { wire::request_from_json(json::parse(R"({"messages": [{"content": "x"}]})")); }),
            ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] {
              wire::request_from_json(json::parse(
                  R"({"messages": [{"role": "user", "content": [{"type": "audio"}]}]})"));
            }),
            ErrorCode::SchemaError);
  auto j = wire::request_to_json(sample_request());
  j["messages"][1]["content"][1]["width"] = 7;
  EXPECT_EQ(code_of([&] { wire::request_from_json(j); }), ErrorCode::SchemaError);
}

TEST(Wire, ResponseRoundTrip) {
  ModelResponse r{"hello", 10, 2, false};
  const auto back = wire::response_from_json(wire::response_to_json(r));
  EXPECT_EQ(back.text, "hello");
  EXPECT_EQ(back.prompt_tokens, 10);
  EXPECT_EQ(back.completion_tokens, 2);
  EXPECT_EQ(code_of([] { wire::response_from_json(json::parse(R"({"choices": []})")); }), ErrorCode::SchemaError);
}

namespace {

struct LocalServer {
  httplib::Server svr;
  int port = 0;
  std::thread th;
  explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    svr.Post("/v1/chat/completions", std::move(handler));
    port = svr.bind_to_any_port("127.0.0.1");
    th = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  ~LocalServer() {
    svr.stop();
    th.join();
  }
  HttpBackendConfig config() const {
    HttpBackendConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port);
    c.model = "test-model";
    c.timeout_seconds = 5;
    return c;
  }
};

}  // namespace

TEST(Http, PostsWireJsonAndParsesUsage) {
  json seen;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(wire::response_to_json({"pong", 40, 1, false}).dump(), "application/json");
  });
  HttpBackend b(server.config());
  const auto r = b.chat(sample_request());
  EXPECT_EQ(r.text, "pong");
  EXPECT_EQ(r.prompt_tokens, 40);
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 0.3);
  EXPECT_TRUE(wire::same_request(wire::request_from_json(seen), sample_request()));
}

TEST(Http, MissingUsageIsEstimated) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "abcd"}}]})", "application/json");
  });
  HttpBackend b(server.config());
  const auto r = b.chat(sample_request());
  EXPECT_TRUE(r.estimated);
  EXPECT_EQ(r.completion_tokens, 1);
}

TEST(Http, StatusMapping) {
  int status = 429;
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    res.status = status;
    res.set_content("nope", "text/plain");
  });
  HttpBackend b(server.config());
  const auto req = sample_request();
  EXPECT_EQ(code_of([&] { b.chat(req); }), ErrorCode::RateLimited);
  status = 504;
  EXPECT_EQ(code_of([&] { b.chat(req); }), ErrorCode::Timeout);
  status = 400;
  EXPECT_EQ(code_of([&] { b.chat(req); }), ErrorCode::SchemaError);
  status = 500;
  EXPECT_EQ(code_of([&] { b.chat(req); }), ErrorCode::BackendError);
  status = 200;  // body is not JSON
  EXPECT_EQ(code_of([&] { b.chat(req); }), ErrorCode::SchemaError);
}

TEST(Http, RetriesTransientThenSucceeds) {
  int hits = 0;
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++hits == 1) {
      res.status = 429;
      return;
    }
    res.set_content(wire::response_to_json({"ok", 1, 1, false}).dump(), "application/json");
  });
  RetryingBackend b(std::make_shared<HttpBackend>(server.config()), 3, [](auto) {});
  EXPECT_EQ(b.chat(sample_request()).text, "ok");
  EXPECT_EQ(hits, 2);
  EXPECT_EQ(b.retries(), 1);
}

TEST(Http, ImageLimitCheckedBeforeNetwork) {
  int hits = 0;
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content(wire::response_to_json({"ok", 1, 1, false}).dump(), "application/json");
  });
  HttpBackend b(server.config());
  EXPECT_EQ(code_of([&] { b.chat(with_images(9)); }), ErrorCode::SchemaError);
  EXPECT_EQ(hits, 0);
}

TEST(Http, ConnectionRefused) {
  HttpBackendConfig c;
  c.base_url = "http://127.0.0.1:1";
  c.timeout_seconds = 1;
  HttpBackend b(c);
  const auto code = code_of([&] { b.chat(sample_request()); });
  EXPECT_TRUE(code == ErrorCode::BackendError || code == ErrorCode::Timeout);
}
