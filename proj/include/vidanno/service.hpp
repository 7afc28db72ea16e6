#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "vidanno/monitor.hpp"
#include "vidanno/session.hpp"

namespace httplib {
class Server;
}

namespace vidanno {

inline constexpr const char* kApiPrefix = "/api/v1";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  std::filesystem::path workdir = "vidanno_work";
  std::string backend = "reference";  // or "remote"
  std::string backend_address;        // host:port for the remote backend
  std::size_t cache_capacity = 64;
  double monitor_rate_hz = 5.0;
  std::optional<std::filesystem::path> monitor_csv;
  std::optional<double> rss_warn_mib;
  std::optional<std::filesystem::path> ui_dir;  // static files served at /
};

/// Parses the JSON config document; unknown keys and bad values are format errors.
ServiceConfig parse_service_config(const std::string& text);
ServiceConfig load_service_config(const std::filesystem::path& path);

/// HTTP facade over one Session. All routes live under /api/v1.
class Service {
 public:
  /// `backend` overrides the one named in the config.
  explicit Service(ServiceConfig config, std::shared_ptr<Backend> backend = nullptr);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; throws Io when the port is taken.
  int bind();
  /// Serves on the calling thread until stop().
  void run();
  /// bind() + run() on a background thread.
  int start();
  void stop();

  int port() const noexcept { return port_; }
  Session& session() noexcept { return *session_; }
  const ServiceConfig& config() const noexcept { return config_; }

 private:
  void routes();

  ServiceConfig config_;
  std::shared_ptr<ResidencyCounter> residency_;
  std::shared_ptr<Backend> backend_;
  std::unique_ptr<Session> session_;
  std::unique_ptr<Monitor> monitor_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace vidanno
