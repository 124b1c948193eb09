#pragma once

// Line-delimited JSON environment wire over a local TCP socket. One request
// object per line, one reply per line:
//   {"verb": "capabilities"}                      -> {"ok": true, "id", "capabilities", "screen"}
//   {"verb": "reset", "task_id": "..."}           -> {"ok": true, "screenshot": <base64 PNG>}
//   {"verb": "observe"}                           -> {"ok": true, "screenshot"}
//   {"verb": "execute", "action": "agent.click(...)", "coordinates": [[x, y]]}
//                                                 -> {"ok": true, "screenshot", "primitives": [...]}
//   {"verb": "command", "language": "bash", "code": "..."}
//                                                 -> {"ok": true, "stdout", "stderr", "exit_code"}
//   {"verb": "ocr"}                               -> {"ok": true, "rows": [{"text","id","bbox"}], "width_threshold"}
// Failures reply {"ok": false, "error": {"code": "<ErrorCode>", "message": "..."}}.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>

#include "json.hpp"
#include "symphony/env/environment.hpp"

namespace symphony::envwire {

using nlohmann::json;

inline json screenshot_json(const Observation& o) { return base64_encode(encode_png(o.image())); }

inline Observation screenshot_from(const json& j) {
  return Observation(decode_png(base64_decode(j.get<std::string>())));
}

inline json primitive_to_json(const Primitive& p) {
  static const char* buttons[] = {"left", "right", "middle"};
  json j = {{"kind", to_string(p.kind)}};
  switch (p.kind) {
    case PrimitiveKind::move:
    case PrimitiveKind::press:
    case PrimitiveKind::release:
    case PrimitiveKind::drag:
    case PrimitiveKind::click:
    case PrimitiveKind::scroll:
      j["x"] = p.point.x;
      j["y"] = p.point.y;
      j["button"] = buttons[static_cast<int>(p.button)];
      j["amount"] = p.amount;
      break;
    case PrimitiveKind::wait: j["seconds"] = p.seconds; break;
    default:
      j["text"] = p.text;
      j["amount"] = p.amount;
      break;
  }
  return j;
}

inline Primitive primitive_from_json(const json& j) {
  Primitive p;
  const auto kind = primitive_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) fail(ErrorCode::SchemaError, "unknown primitive " + j.at("kind").dump());
  p.kind = *kind;
  p.point = {j.value("x", 0), j.value("y", 0)};
  const auto b = j.value("button", std::string("left"));
  p.button = b == "right" ? MouseButton::right : b == "middle" ? MouseButton::middle : MouseButton::left;
  p.amount = j.value("amount", 0);
  p.text = j.value("text", std::string{});
  p.seconds = j.value("seconds", 0.0);
  return p;
}

inline json grounded_to_json(const GroundedAction& ga) {
  json pts = json::array();
  for (const auto& p : ga.coordinates) pts.push_back({p.x, p.y});
  return {{"action", format_action(ga.action)}, {"coordinates", pts}};
}

inline GroundedAction grounded_from_json(const json& j) {
  GroundedAction ga{parse_action(j.at("action").get<std::string>()), {}};
  for (const auto& p : j.value("coordinates", json::array())) ga.coordinates.push_back({p.at(0), p.at(1)});
  return ga;
}

inline json ocr_to_json(const OcrTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back({{"text", r.text}, {"id", r.id}, {"bbox", {r.x1, r.y1, r.x2, r.y2}}});
  return {{"rows", rows}, {"width_threshold", t.width_threshold}};
}

inline OcrTable ocr_from_json(const json& j) {
  OcrTable t;
  t.width_threshold = j.value("width_threshold", 0.1);
  for (const auto& r : j.at("rows")) {
    const auto& b = r.at("bbox");
    t.rows.push_back({r.at("text").get<std::string>(), r.at("id").get<int>(), b.at(0), b.at(1), b.at(2), b.at(3)});
  }
  return t;
}

// Evaluates one request against an environment; never throws.
inline json handle_request(Environment& env, const json& req) {
  try {
    const auto verb = req.at("verb").get<std::string>();
    if (verb == "capabilities") {
      const auto c = env.capabilities();
      const auto s = env.screen();
      return {{"ok", true},
              {"id", env.id()},
              {"capabilities",
               {{"gui_primitives", c.gui_primitives},
                {"command_channel", c.command_channel},
                {"search_sandbox", c.search_sandbox},
                {"ocr", c.ocr}}},
              {"screen", {{"width", s.width()}, {"height", s.height()}}}};
    }
    if (verb == "reset") return {{"ok", true}, {"screenshot", screenshot_json(env.reset(req.value("task_id", "")))}};
    if (verb == "observe") return {{"ok", true}, {"screenshot", screenshot_json(env.observe())}};
    if (verb == "execute") {
      const auto shot = env.execute(grounded_from_json(req));
      json prims = json::array();
      for (const auto& p : env.last_primitives()) prims.push_back(primitive_to_json(p));
      return {{"ok", true}, {"screenshot", screenshot_json(shot)}, {"primitives", prims}};
    }
    if (verb == "command") {
      const auto r = env.command({req.value("language", "bash"), req.at("code").get<std::string>()});
      return {{"ok", true}, {"stdout", r.stdout_text}, {"stderr", r.stderr_text}, {"exit_code", r.exit_code}};
    }
    if (verb == "ocr") {
      auto j = ocr_to_json(env.ocr());
      j["ok"] = true;
      return j;
    }
    fail(ErrorCode::SchemaError, "unknown verb " + verb);
  } catch (const Error& e) {
    std::string msg = e.what();
    const auto prefix = std::string(to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    return {{"ok", false}, {"error", {{"code", to_string(e.code())}, {"message", msg}}}};
  } catch (const std::exception& e) {
    return {{"ok", false}, {"error", {{"code", "SchemaError"}, {"message", e.what()}}}};
  }
}

namespace detail {

class LineSocket {
 public:
  explicit LineSocket(int fd, bool owned = true) : fd_(fd), owned_(owned) {}
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;
  ~LineSocket() {
    if (owned_ && fd_ >= 0) ::close(fd_);
  }

  bool read_line(std::string& line) {
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return true;
      }
      char chunk[65536];
      const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  bool write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t sent = 0;
    while (sent < data.size()) {
      const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  void shutdown() { ::shutdown(fd_, SHUT_RDWR); }

 private:
  int fd_;
  bool owned_;
  std::string buf_;
};

}  // namespace detail

// Serves one connected client until it disconnects. Takes ownership of fd
// unless `owned` is false.
inline void serve_environment_connection(int fd, Environment& env, bool owned = true) {
  detail::LineSocket sock(fd, owned);
  std::string line;
  while (sock.read_line(line)) {
    if (line.empty()) continue;
    json reply;
    try {
      reply = handle_request(env, json::parse(line));
    } catch (const json::exception& e) {
      reply = {{"ok", false}, {"error", {{"code", "SchemaError"}, {"message", e.what()}}}};
    }
    if (!sock.write_line(reply.dump())) return;
  }
}

// Loopback listener; serves clients one at a time on a background thread.
class EnvironmentServer {
 public:
  EnvironmentServer(Environment& env, int port = 0) : env_(env) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) fail(ErrorCode::EnvironmentError, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 4) < 0) {
      ::close(listen_fd_);
      fail(ErrorCode::EnvironmentError, std::string("bind/listen: ") + std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { loop(); });
  }

  EnvironmentServer(const EnvironmentServer&) = delete;
  EnvironmentServer& operator=(const EnvironmentServer&) = delete;

  ~EnvironmentServer() { stop(); }

  int port() const { return port_; }

  // Disconnects the current client, if any, and joins the server thread.
  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    {
      std::lock_guard lock(mu_);
      if (active_fd_ >= 0) ::shutdown(active_fd_, SHUT_RDWR);
    }
    if (thread_.joinable()) thread_.join();
    ::close(listen_fd_);
  }

 private:
  void loop() {
    while (!stopping_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        return;
      }
      {
        std::lock_guard lock(mu_);
        active_fd_ = fd;
        if (stopping_) ::shutdown(fd, SHUT_RDWR);
      }
      serve_environment_connection(fd, env_, false);
      std::lock_guard lock(mu_);
      active_fd_ = -1;
      ::close(fd);
    }
  }

  Environment& env_;
  std::mutex mu_;
  int active_fd_ = -1;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

// Client side of the wire.
class SocketEnvironment : public Environment {
 public:
  SocketEnvironment(const std::string& host, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail(ErrorCode::EnvironmentError, std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      fail(ErrorCode::ConfigError, "bad IPv4 address " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      ::close(fd);
      fail(ErrorCode::EnvironmentError, "connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sock_ = std::make_unique<detail::LineSocket>(fd);
    const auto caps = call({{"verb", "capabilities"}});
    id_ = caps.value("id", host + ":" + std::to_string(port));
    const auto& c = caps.at("capabilities");
    caps_ = {c.value("gui_primitives", false), c.value("command_channel", false), c.value("search_sandbox", false),
             c.value("ocr", false)};
    screen_ = {caps.at("screen").at("width").get<int>(), caps.at("screen").at("height").get<int>()};
  }

  std::string id() const override { return id_; }
  Capabilities capabilities() const override { return caps_; }
  ScreenGeometry screen() const override { return screen_; }

  Observation reset(const std::string& task_id) override {
    return screenshot_from(call({{"verb", "reset"}, {"task_id", task_id}}).at("screenshot"));
  }
  Observation observe() override { return screenshot_from(call({{"verb", "observe"}}).at("screenshot")); }

  Observation execute(const GroundedAction& ga) override {
    auto req = grounded_to_json(ga);
    req["verb"] = "execute";
    const auto reply = call(req);
    {
      std::lock_guard lock(mu_);
      primitives_.clear();
      for (const auto& p : reply.value("primitives", json::array())) primitives_.push_back(primitive_from_json(p));
    }
    return screenshot_from(reply.at("screenshot"));
  }

  CommandResult command(const CommandRequest& r) override {
    const auto reply = call({{"verb", "command"}, {"language", r.language}, {"code", r.code}});
    return {reply.value("stdout", ""), reply.value("stderr", ""), reply.value("exit_code", 0)};
  }

  OcrTable ocr() override { return ocr_from_json(call({{"verb", "ocr"}})); }

  std::vector<Primitive> last_primitives() const override {
    std::lock_guard lock(mu_);
    return primitives_;
  }

 private:
  json call(const json& req) {
    std::lock_guard lock(io_);
    if (!sock_->write_line(req.dump())) fail(ErrorCode::EnvironmentError, "environment connection lost");
    std::string line;
    if (!sock_->read_line(line)) fail(ErrorCode::EnvironmentError, "environment connection closed");
    json reply;
    try {
      reply = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::EnvironmentError, std::string("bad reply: ") + e.what());
    }
    if (!reply.value("ok", false)) {
      const auto& err = reply.at("error");
      fail(error_code_from_string(err.value("code", "EnvironmentError")), err.value("message", "environment error"));
    }
    return reply;
  }

  std::unique_ptr<detail::LineSocket> sock_;
  std::string id_;
  Capabilities caps_;
  ScreenGeometry screen_;
  mutable std::mutex mu_;
  std::mutex io_;
  std::vector<Primitive> primitives_;
};

}  // namespace symphony::envwire
