// Command-line entry point: the HTTP service, the evaluation harness, a
// standalone reference backend server and the synthetic scene generator.

#include <csignal>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "vidanno/backend.hpp"
#include "vidanno/evaluate.hpp"
#include "vidanno/service.hpp"
#include "vidanno/synth.hpp"

namespace {

using namespace vidanno;

Service* g_service = nullptr;
BackendServer* g_backend_server = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
  if (g_backend_server) g_backend_server->stop();
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Format:
    case ErrorKind::UnsupportedVersion: return 3;
    case ErrorKind::Io: return 4;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive video annotation service and tools"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  std::string config_path;
  ServiceConfig cfg;
  std::string monitor_csv, ui_dir;
  serve->add_option("--config", config_path, "JSON config file; flags given alongside override it");
  serve->add_option("--host", cfg.host);
  serve->add_option("--port", cfg.port);
  serve->add_option("--workdir", cfg.workdir);
  serve->add_option("--backend", cfg.backend)->check(CLI::IsMember({"reference", "remote"}));
  serve->add_option("--backend-address", cfg.backend_address, "host:port of a remote backend");
  serve->add_option("--cache-capacity", cfg.cache_capacity);
  serve->add_option("--monitor-rate", cfg.monitor_rate_hz);
  serve->add_option("--monitor-csv", monitor_csv);
  serve->add_option("--ui-dir", ui_dir, "Static files served at /");

  // eval
  auto* eval = app.add_subcommand("eval", "Score palette PNG predictions against ground truth");
  std::string pred, gt, match = "identity", report;
  eval->add_option("--pred", pred)->required();
  eval->add_option("--gt", gt)->required();
  eval->add_option("--match", match)->check(CLI::IsMember({"identity", "greedy"}));
  eval->add_option("--report", report, "Write the CSV report here as well as to stdout");

  // backend
  auto* backend = app.add_subcommand("backend", "Serve the reference backend over the wire protocol");
  std::string backend_host = "127.0.0.1";
  int backend_port = 8766;
  backend->add_option("--host", backend_host);
  backend->add_option("--port", backend_port);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic clip and its ground truth");
  synth::SceneConfig scene;
  std::string out_dir;
  synth_cmd->add_option("--out", out_dir, "Receives frames/ and gt/")->required();
  synth_cmd->add_option("--frames", scene.frames);
  synth_cmd->add_option("--width", scene.width);
  synth_cmd->add_option("--height", scene.height);
  synth_cmd->add_option("--blobs", scene.blobs);
  synth_cmd->add_option("--radius", scene.radius);
  synth_cmd->add_option("--max-step", scene.max_step);
  synth_cmd->add_option("--seed", scene.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      ServiceConfig effective = config_path.empty() ? ServiceConfig{} : load_service_config(config_path);
      // Flags that were given explicitly win over the file.
      if (serve->count("--host")) effective.host = cfg.host;
      if (serve->count("--port")) effective.port = cfg.port;
      if (serve->count("--workdir")) effective.workdir = cfg.workdir;
      if (serve->count("--backend")) effective.backend = cfg.backend;
      if (serve->count("--backend-address")) effective.backend_address = cfg.backend_address;
      if (serve->count("--cache-capacity")) effective.cache_capacity = cfg.cache_capacity;
      if (serve->count("--monitor-rate")) effective.monitor_rate_hz = cfg.monitor_rate_hz;
      if (!monitor_csv.empty()) effective.monitor_csv = monitor_csv;
      if (!ui_dir.empty()) effective.ui_dir = ui_dir;

      Service service(effective);
      const int port = service.bind();
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << effective.host << ':' << port << kApiPrefix << std::endl;
      service.run();
      g_service = nullptr;
      return 0;
    }

    if (*eval) {
      const auto rows = metrics::evaluate_report(pred, gt, *metrics::parse_matching(match));
      const std::string csv = metrics::report_csv(rows);
      std::cout << csv;
      if (!report.empty()) {
        std::FILE* f = std::fopen(report.c_str(), "w");
        if (!f) fail(ErrorKind::Io, "cannot write " + report);
        std::fwrite(csv.data(), 1, csv.size(), f);
        std::fclose(f);
      }
      return 0;
    }

    if (*backend) {
      ReferenceBackend reference;
      BackendServer server(reference, backend_host, backend_port);
      g_backend_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "reference backend on " << backend_host << ':' << server.port() << std::endl;
      server.run();
      g_backend_server = nullptr;
      return 0;
    }

    if (*synth_cmd) {
      const std::filesystem::path out(out_dir);
      synth::write_scene(synth::make_scene(scene), out / "frames", out / "gt");
      std::cout << scene.frames << " frames written to " << out.string() << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
