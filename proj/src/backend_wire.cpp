// Newline-delimited JSON transport for the backend protocol. See
// docs/protocol.md for the message catalogue.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

#include "vidanno/backend.hpp"

namespace vidanno {

using json = nlohmann::json;

namespace {

class LineChannel {
 public:
  explicit LineChannel(int fd) : fd_(fd) {}
  ~LineChannel() {
    if (fd_ >= 0) ::close(fd_);
  }
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  bool write_line(const std::string& line) {
    std::string data = line;
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  bool has_buffered_line() const { return buffer_.find('\n') != std::string::npos; }

  /// False on EOF or error.
  bool read_line(std::string& line) {
    for (;;) {
      if (auto nl = buffer_.find('\n', scanned_); nl != std::string::npos) {
        line.assign(buffer_, 0, nl);
        buffer_.erase(0, nl + 1);
        scanned_ = 0;
        return true;
      }
      scanned_ = buffer_.size();
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
  std::size_t scanned_ = 0;
};

json rle_to_json(const RleMask& r) {
  return json{{"width", r.width}, {"height", r.height}, {"counts", r.counts}};
}

RleMask rle_from_json(const json& j) {
  RleMask r;
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  r.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  return r;
}

json prompts_to_json(const std::string& state_id, const PromptBundle& b) {
  json points = json::array();
  for (const SignedPoint& p : b.points) points.push_back({p.x, p.y, p.positive ? 1 : 0});
  json box = nullptr;
  if (b.box) {
    box = {b.box->corner_a.x, b.box->corner_a.y, b.box->corner_b.x, b.box->corner_b.y};
  }
  return json{{"type", "add_prompts"}, {"state_id", state_id}, {"frame_pos", b.frame_pos},
              {"label_id", b.label},   {"points", points},       {"box", box}};
}

PromptBundle prompts_from_json(const json& j) {
  PromptBundle b;
  b.frame_pos = j.at("frame_pos").get<int>();
  b.label = j.at("label_id").get<int>();
  for (const auto& p : j.at("points")) {
    b.points.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>() != 0});
  }
  if (j.contains("box") && !j["box"].is_null()) {
    const auto& v = j["box"];
    b.box = BoxShape{{v.at(0).get<int>(), v.at(1).get<int>()},
                     {v.at(2).get<int>(), v.at(3).get<int>()}};
  }
  return b;
}

json stats_to_json(const BackendStats& s) {
  json j{{"type", "stats"}};
  if (s.gpu_util_pct) j["gpu_util_pct"] = *s.gpu_util_pct;
  if (s.vram_mib) j["vram_mib"] = *s.vram_mib;
  return j;
}

BackendStats stats_from_json(const json& j) {
  BackendStats s;
  if (j.contains("gpu_util_pct") && j["gpu_util_pct"].is_number()) {
    s.gpu_util_pct = j["gpu_util_pct"].get<double>();
  }
  if (j.contains("vram_mib") && j["vram_mib"].is_number()) s.vram_mib = j["vram_mib"].get<double>();
  return s;
}

}  // namespace

std::pair<std::string, int> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    fail(ErrorKind::Domain, "address must be host:port, got '" + address + "'");
  }
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    fail(ErrorKind::Domain, "bad port in address '" + address + "'");
  }
  if (port < 0 || port > 65535) fail(ErrorKind::Domain, "port out of range");
  return {address.substr(0, colon), port};
}

// ---------------------------------------------------------------------------
// Client

struct RemoteBackend::Connection {
  explicit Connection(int fd) : channel(fd) {}
  LineChannel channel;
};

RemoteBackend::RemoteBackend(std::string address) : address_(std::move(address)) {
  parse_address(address_);
}

RemoteBackend::~RemoteBackend() = default;

RemoteBackend::Connection& RemoteBackend::connection() {
  if (conn_) return *conn_;
  const auto [host, port] = parse_address(address_);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    fail(ErrorKind::Io, "cannot resolve backend " + address_);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) fail(ErrorKind::Io, "backend unreachable at " + address_);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  conn_ = std::make_unique<Connection>(fd);
  return *conn_;
}

void RemoteBackend::disconnect() { conn_.reset(); }

namespace {

json round_trip(LineChannel& ch, const json& request) {
  if (!ch.write_line(request.dump())) fail(ErrorKind::Io, "backend connection lost");
  std::string line;
  if (!ch.read_line(line)) fail(ErrorKind::Io, "backend connection lost");
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed backend reply: ") + e.what());
  }
  if (reply.value("type", "") == "error") {
    fail(ErrorKind::Io, "backend error: " + reply.value("message", std::string("unknown")));
  }
  return reply;
}

}  // namespace

void RemoteBackend::init_state(const std::string& state_id,
                               const std::vector<std::filesystem::path>& frames) {
  std::lock_guard lock(mutex_);
  json paths = json::array();
  for (const auto& f : frames) paths.push_back(f.string());
  try {
    round_trip(connection().channel, {{"type", "init_state"},
                                      {"version", kProtocolVersion},
                                      {"state_id", state_id},
                                      {"frames", paths}});
  } catch (...) {
    disconnect();
    throw;
  }
}

void RemoteBackend::add_prompts(const std::string& state_id, const PromptBundle& prompts) {
  std::lock_guard lock(mutex_);
  try {
    round_trip(connection().channel, prompts_to_json(state_id, prompts));
  } catch (...) {
    disconnect();
    throw;
  }
}

void RemoteBackend::propagate(const std::string& state_id, const MaskSink& sink) {
  std::lock_guard lock(mutex_);
  try {
    LineChannel& ch = connection().channel;
    if (!ch.write_line(json{{"type", "propagate"}, {"state_id", state_id}}.dump())) {
      fail(ErrorKind::Io, "backend connection lost");
    }
    std::string line;
    for (;;) {
      if (!ch.read_line(line)) fail(ErrorKind::Io, "backend stream ended early");
      const json msg = json::parse(line);
      const std::string type = msg.value("type", "");
      if (type == "propagate_done") return;
      if (type == "error") {
        fail(ErrorKind::Io, "backend error: " + msg.value("message", std::string("unknown")));
      }
      if (type != "mask_result") fail(ErrorKind::Format, "unexpected message " + type);
      MaskResult r{msg.at("frame_pos").get<int>(), msg.at("label_id").get<int>(),
                   rle_decode(rle_from_json(msg.at("rle")))};
      if (!sink(std::move(r))) {
        // Abandon the rest of the stream; the next call reconnects.
        disconnect();
        return;
      }
    }
  } catch (const json::exception& e) {
    disconnect();
    fail(ErrorKind::Format, std::string("malformed backend message: ") + e.what());
  } catch (...) {
    disconnect();
    throw;
  }
}

void RemoteBackend::reset(const std::string& state_id) {
  std::lock_guard lock(mutex_);
  try {
    round_trip(connection().channel, {{"type", "reset"}, {"state_id", state_id}});
  } catch (...) {
    disconnect();
    throw;
  }
}

BackendStats RemoteBackend::stats() {
  // Never wait behind a running stream; the monitor must not block.
  std::unique_lock lock(mutex_, std::try_to_lock);
  if (!lock.owns_lock()) return {};
  try {
    return stats_from_json(round_trip(connection().channel, {{"type", "stats"}}));
  } catch (...) {
    disconnect();
    return {};
  }
}

bool RemoteBackend::healthy() noexcept {
  std::unique_lock lock(mutex_, std::try_to_lock);
  if (!lock.owns_lock()) return true;  // busy streaming, hence connected
  try {
    connection();
    return true;
  } catch (...) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Server

BackendServer::BackendServer(Backend& backend, const std::string& host, int port)
    : backend_(backend) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) fail(ErrorKind::Io, "cannot create socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    fail(ErrorKind::Domain, "bad listen host " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 4) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    fail(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

BackendServer::~BackendServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void BackendServer::start() {
  thread_ = std::thread([this] { run(); });
}

void BackendServer::stop() {
  stopping_ = true;
  if (thread_.joinable()) thread_.join();
}

void BackendServer::run() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    serve_client(fd);
  }
}

void BackendServer::serve_client(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  LineChannel ch(fd);
  std::string line;
  while (!stopping_) {
    if (!ch.has_buffered_line()) {
      pollfd p{fd, POLLIN, 0};
      if (::poll(&p, 1, 100) == 0) continue;
    }
    if (!ch.read_line(line)) return;
    json reply;
    try {
      const json req = json::parse(line);
      const std::string type = req.value("type", "");
      if (type == "init_state") {
        const int version = req.value("version", kProtocolVersion);
        if (version != kProtocolVersion) {
          fail(ErrorKind::UnsupportedVersion,
               "protocol version " + std::to_string(version) + " not supported");
        }
        std::vector<std::filesystem::path> frames;
        for (const auto& f : req.at("frames")) frames.emplace_back(f.get<std::string>());
        backend_.init_state(req.at("state_id").get<std::string>(), frames);
        reply = {{"type", "ok"}};
      } else if (type == "add_prompts") {
        backend_.add_prompts(req.at("state_id").get<std::string>(), prompts_from_json(req));
        reply = {{"type", "ok"}};
      } else if (type == "propagate") {
        bool open = true;
        backend_.propagate(req.at("state_id").get<std::string>(), [&](MaskResult r) {
          open = ch.write_line(json{{"type", "mask_result"},
                                    {"frame_pos", r.frame_pos},
                                    {"label_id", r.label},
                                    {"rle", rle_to_json(rle_encode(r.mask))}}
                                   .dump());
          return open;
        });
        if (!open) return;
        reply = {{"type", "propagate_done"}};
      } else if (type == "reset") {
        backend_.reset(req.at("state_id").get<std::string>());
        reply = {{"type", "ok"}};
      } else if (type == "stats") {
        reply = stats_to_json(backend_.stats());
      } else {
        reply = {{"type", "error"}, {"message", "unknown message type '" + type + "'"}};
      }
    } catch (const Error& e) {
      reply = {{"type", "error"}, {"kind", to_string(e.kind())}, {"message", e.what()}};
    } catch (const std::exception& e) {
      reply = {{"type", "error"}, {"kind", "format"}, {"message", e.what()}};
    }
    if (!ch.write_line(reply.dump())) return;
  }
}

}  // namespace vidanno
