#include "vidanno/service.hpp"

#include <sys/socket.h>

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "json_codec.hpp"

namespace fs = std::filesystem;

namespace vidanno {

using codec::json;
using httplib::Request;
using httplib::Response;

// ---------------------------------------------------------------------------
// config

ServiceConfig parse_service_config(const std::string& text) {
  ServiceConfig c;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::Format, "config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "host") c.host = v.get<std::string>();
      else if (key == "port") c.port = v.get<int>();
      else if (key == "workdir") c.workdir = v.get<std::string>();
      else if (key == "backend") c.backend = v.get<std::string>();
      else if (key == "backend_address") c.backend_address = v.get<std::string>();
      else if (key == "cache_capacity") c.cache_capacity = v.get<std::size_t>();
      else if (key == "monitor_rate_hz") c.monitor_rate_hz = v.get<double>();
      else if (key == "monitor_csv") c.monitor_csv = v.get<std::string>();
      else if (key == "rss_warn_mib") c.rss_warn_mib = v.get<double>();
      else if (key == "ui_dir") c.ui_dir = v.get<std::string>();
      else fail(ErrorKind::Format, "unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad config value: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) fail(ErrorKind::Format, "port out of range");
  if (c.backend != "reference" && c.backend != "remote") {
    fail(ErrorKind::Format, "backend must be 'reference' or 'remote'");
  }
  if (c.backend == "remote") parse_address(c.backend_address);
  if (c.cache_capacity < 1) fail(ErrorKind::Format, "cache_capacity must be >= 1");
  if (!(c.monitor_rate_hz > 0)) fail(ErrorKind::Format, "monitor_rate_hz must be positive");
  return c;
}

ServiceConfig load_service_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return parse_service_config(s.str());
}

// ---------------------------------------------------------------------------
// request helpers

namespace {

int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain:
    case ErrorKind::Format: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Busy:
    case ErrorKind::Conflict:
    case ErrorKind::Capacity:
    case ErrorKind::State: return 409;
    case ErrorKind::Precondition:
    case ErrorKind::UnsupportedVersion:
    case ErrorKind::MissingMedia: return 422;
    case ErrorKind::Io: return 500;
  }
  return 500;
}

void send_json(Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, ErrorKind kind, const std::string& message) {
  send_json(res, {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}},
            status_for(kind));
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const Request& req, Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorKind::Format, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorKind::Io, e.what());
    }
  };
}

json body_of(const Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) fail(ErrorKind::Format, "request body must be a JSON object");
  return j;
}

int int_param(const std::string& text, const char* what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) fail(ErrorKind::Domain, std::string("bad ") + what + " '" + text + "'");
  return v;
}

int path_int(const Request& req, const char* name) { return int_param(req.path_params.at(name), name); }

std::optional<int> query_int(const Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return int_param(req.get_param_value(name), name);
}

Pixel pixel_at(const json& arr, std::size_t i) { return {arr.at(i).get<int>(), arr.at(i + 1).get<int>()}; }

}  // namespace

// ---------------------------------------------------------------------------
// service

Service::Service(ServiceConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)), residency_(std::make_shared<ResidencyCounter>()) {
  if (backend) {
    backend_ = std::move(backend);
  } else if (config_.backend == "remote") {
    backend_ = std::make_shared<RemoteBackend>(config_.backend_address);
  } else {
    backend_ = std::make_shared<ReferenceBackend>(ChromaKeyConfig{}, residency_.get());
  }
  SessionConfig sc;
  sc.workdir = config_.workdir;
  sc.cache_capacity = config_.cache_capacity;
  session_ = std::make_unique<Session>(sc, backend_, residency_);
  server_ = std::make_unique<httplib::Server>();
  routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  // Exclusive bind: a second server on the same port must fail.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
  } else {
    port_ = server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ < 0) {
    fail(ErrorKind::Io, "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  }
  Monitor::Options mo;
  mo.rate_hz = config_.monitor_rate_hz;
  mo.csv = config_.monitor_csv;
  mo.rss_warn_mib = config_.rss_warn_mib;
  Backend* backend = backend_.get();
  EventBus* bus = &session_->events();
  monitor_ = std::make_unique<Monitor>([backend] { return backend->stats(); }, mo,
                                       [bus](const ResourceSample& s) {
                                         bus->publish("monitor", codec::sample_json(s).dump());
                                       });
  return port_;
}

void Service::run() { server_->listen_after_bind(); }

int Service::start() {
  const int p = bind();
  thread_ = std::thread([this] { run(); });
  server_->wait_until_ready();
  return p;
}

void Service::stop() {
  if (monitor_) monitor_->stop();
  session_->events().close_all();
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void Service::routes() {
  auto& svr = *server_;
  Session& s = *session_;
  const std::string api = kApiPrefix;
  svr.new_task_queue = [] { return new httplib::ThreadPool(16); };

  if (config_.ui_dir) svr.set_mount_point("/", config_.ui_dir->string());

  svr.Get(api + "/health", guarded([this, &s](const Request&, Response& res) {
    const bool backend_ok = backend_->healthy();
    send_json(res, {{"status", backend_ok ? "ok" : "degraded"},
                    {"backend", config_.backend},
                    {"backend_healthy", backend_ok},
                    {"protocol_version", kProtocolVersion},
                    {"media_loaded", s.read([](const SessionData& d) { return d.has_media(); })},
                    {"job_running", s.job_running()}});
  }));

  // media ------------------------------------------------------------------
  svr.Post(api + "/media", guarded([&s](const Request& req, Response& res) {
    const json b = body_of(req);
    s.load_media(b.at("path").get<std::string>(), b.at("block_size").get<int>());
    send_json(res, codec::media_json(s.read([](const SessionData& d) { return d.media; }), s.block_plan()));
  }));
  svr.Get(api + "/media", guarded([&s](const Request&, Response& res) {
    const MediaInfo m = s.read([](const SessionData& d) { return d.media; });
    if (m.frames == 0) fail(ErrorKind::NotFound, "no media loaded");
    send_json(res, codec::media_json(m, s.block_plan()));
  }));
  svr.Get(api + "/media/stats", guarded([this](const Request&, Response& res) {
    send_json(res, {{"resident_frames", residency_->current()},
                    {"peak_resident_frames", residency_->peak()},
                    {"block_size", session_->read([](const SessionData& d) { return d.block_size; })}});
  }));
  svr.Post(api + "/media/stats/reset-peak", guarded([this](const Request&, Response& res) {
    residency_->reset_peak();
    send_json(res, {{"peak_resident_frames", residency_->peak()}});
  }));
  svr.Post(api + "/blocks/:b/activate", guarded([&s](const Request& req, Response& res) {
    const int b = path_int(req, "b");
    const FrameRange r = s.block_plan().block(b);
    const fs::path dir = s.activate_block(b);
    auto st = s.settings();
    st.cursor = r.start;
    s.update_settings(st);
    send_json(res, {{"block", b}, {"start", r.start}, {"end", r.end}, {"directory", dir.string()}});
  }));

  svr.Get(api + "/frames/:t", guarded([&s](const Request& req, Response& res) {
    const int t = path_int(req, "t");
    ViewMode mode = s.settings().view_mode;
    if (req.has_param("mode")) {
      const auto m = parse_view_mode(req.get_param_value("mode"));
      if (!m) fail(ErrorKind::Domain, "unknown view mode '" + req.get_param_value("mode") + "'");
      mode = *m;
    }
    const auto img = s.render(t, mode);
    const auto png = encode_png(*img);
    res.set_header("Cache-Control", "no-store");
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }));

  // labels -----------------------------------------------------------------
  svr.Get(api + "/labels", guarded([&s](const Request&, Response& res) {
    send_json(res, s.read([](const SessionData& d) {
      json out = json::array();
      for (const Label& l : d.labels.all()) out.push_back(codec::label_json(l));
      return out;
    }));
  }));
  svr.Post(api + "/labels", guarded([&s](const Request& req, Response& res) {
    send_json(res, codec::label_json(s.create_label(body_of(req).at("name").get<std::string>())), 201);
  }));
  svr.Patch(api + "/labels/:id", guarded([&s](const Request& req, Response& res) {
    send_json(res, codec::label_json(s.rename_label(path_int(req, "id"),
                                                    body_of(req).at("name").get<std::string>())));
  }));

  // prompts ----------------------------------------------------------------
  svr.Get(api + "/prompts", guarded([&s](const Request& req, Response& res) {
    const auto frame = query_int(req, "frame");
    const auto label = query_int(req, "label_id");
    send_json(res, s.read([&](const SessionData& d) {
      json out = json::array();
      for (const Prompt& p : d.log.all_prompts()) {
        if ((frame && p.frame != *frame) || (label && p.label != *label)) continue;
        out.push_back(codec::prompt_json(p));
      }
      return out;
    }));
  }));
  svr.Post(api + "/prompts", guarded([&s](const Request& req, Response& res) {
    const json b = body_of(req);
    const int frame = b.at("frame").get<int>();
    const int label = b.at("label_id").get<int>();
    Token id = 0;
    if (b.contains("box")) {
      const json& box = b["box"];
      if (!box.is_array() || box.size() != 4) fail(ErrorKind::Format, "box must be [x0,y0,x1,y1]");
      if (b.value("sign", "positive") != "positive") fail(ErrorKind::Domain, "box prompts are positive only");
      id = s.add_box(frame, label, pixel_at(box, 0), pixel_at(box, 2));
    } else {
      const json& pt = b.at("point");
      if (!pt.is_array() || pt.size() != 2) fail(ErrorKind::Format, "point must be [x,y]");
      const std::string sign = b.value("sign", "positive");
      if (sign != "positive" && sign != "negative") fail(ErrorKind::Format, "sign must be positive or negative");
      id = s.add_point(frame, label, pixel_at(pt, 0),
                       sign == "positive" ? PromptSign::Positive : PromptSign::Negative);
    }
    const Prompt p = s.read([id](const SessionData& d) { return d.log.prompt(id); });
    send_json(res, codec::prompt_json(p), 201);
  }));
  svr.Delete(api + "/prompts/:id", guarded([&s](const Request& req, Response& res) {
    s.delete_prompt(static_cast<Token>(path_int(req, "id")));
    res.status = 204;
  }));

  // features ---------------------------------------------------------------
  svr.Get(api + "/features", guarded([&s](const Request&, Response& res) {
    send_json(res, s.read([](const SessionData& d) {
      json edits = json::array();
      for (const FeatureEdit& e : d.log.feature_edits()) {
        edits.push_back({{"id", e.id}, {"feature", e.feature}, {"label_id", e.label}, {"frame", e.frame}, {"value", e.value}});
      }
      return json{{"features", d.log.features()}, {"edits", edits}};
    }));
  }));
  svr.Get(api + "/features/:name/value", guarded([&s](const Request& req, Response& res) {
    const auto label = query_int(req, "label_id");
    const auto frame = query_int(req, "frame");
    if (!label || !frame) fail(ErrorKind::Format, "label_id and frame are required");
    const auto v = s.feature_value(req.path_params.at("name"), *label, *frame);
    send_json(res, {{"value", v ? json(*v) : json(nullptr)}});
  }));
  svr.Post(api + "/features", guarded([&s](const Request& req, Response& res) {
    const std::string name = body_of(req).at("name").get<std::string>();
    s.register_feature(name);
    send_json(res, {{"name", name}}, 201);
  }));
  svr.Post(api + "/feature-edits", guarded([&s](const Request& req, Response& res) {
    const json b = body_of(req);
    const Token id = s.set_feature(b.at("feature").get<std::string>(), b.at("label_id").get<int>(),
                                   b.at("frame").get<int>(), b.at("value").get<std::string>());
    send_json(res, {{"id", id}}, 201);
  }));
  svr.Delete(api + "/feature-edits/:id", guarded([&s](const Request& req, Response& res) {
    s.delete_feature_edit(static_cast<Token>(path_int(req, "id")));
    res.status = 204;
  }));

  // checkpoints ------------------------------------------------------------
  svr.Get(api + "/checkpoints", guarded([&s](const Request&, Response& res) {
    send_json(res, s.read([](const SessionData& d) { return json(d.log.checkpoints()); }));
  }));
  svr.Put(api + "/checkpoints/:t", guarded([&s](const Request& req, Response& res) {
    s.set_checkpoint(path_int(req, "t"));
    res.status = 204;
  }));
  svr.Delete(api + "/checkpoints/:t", guarded([&s](const Request& req, Response& res) {
    s.clear_checkpoint(path_int(req, "t"));
    res.status = 204;
  }));

  // settings ---------------------------------------------------------------
  svr.Get(api + "/settings", guarded([&s](const Request&, Response& res) {
    send_json(res, codec::settings_json(s.settings()));
  }));
  svr.Patch(api + "/settings", guarded([&s](const Request& req, Response& res) {
    const json b = body_of(req);
    SessionSettings st = s.settings();
    for (const auto& [key, v] : b.items()) {
      if (key == "auto_prompt") st.auto_prompt = v.get<bool>();
      else if (key == "show_label_names") st.show_label_names = v.get<bool>();
      else if (key == "cache_enabled") st.cache_enabled = v.get<bool>();
      else if (key == "active_label") st.active_label = v.get<int>();
      else if (key == "cursor") st.cursor = v.get<int>();
      else if (key == "view_mode") {
        const auto m = parse_view_mode(v.get<std::string>());
        if (!m) fail(ErrorKind::Domain, "unknown view mode");
        st.view_mode = *m;
      } else {
        fail(ErrorKind::Format, "unknown setting '" + key + "'");
      }
    }
    s.update_settings(st);
    send_json(res, codec::settings_json(s.settings()));
  }));

  // propagation ------------------------------------------------------------
  svr.Post(api + "/propagate", guarded([&s](const Request& req, Response& res) {
    const json b = body_of(req);
    const auto mode = parse_mode(b.at("mode").get<std::string>());
    if (!mode) fail(ErrorKind::Domain, "mode must be forward, backward, all or singular");
    const auto id = s.start_job(*mode, b.at("t_curr").get<int>());
    send_json(res, codec::job_json(s.job(id)), 202);
  }));
  svr.Get(api + "/jobs/:id", guarded([&s](const Request& req, Response& res) {
    send_json(res, codec::job_json(s.job(static_cast<std::uint64_t>(path_int(req, "id")))));
  }));
  svr.Post(api + "/jobs/:id/cancel", guarded([&s](const Request& req, Response& res) {
    const auto id = static_cast<std::uint64_t>(path_int(req, "id"));
    s.cancel_job(id);
    send_json(res, codec::job_json(s.job(id)), 202);
  }));

  svr.Get(api + "/timeline/:block", guarded([&s](const Request& req, Response& res) {
    const int b = path_int(req, "block");
    const auto label = query_int(req, "label_id");
    const auto cursor = query_int(req, "cursor");
    const auto flags = s.timeline(b, label, cursor);
    json frames = json::array();
    for (const auto& f : flags) frames.push_back(codec::flags_json(f));
    send_json(res, {{"block", b}, {"start", flags.front().frame}, {"end", flags.back().frame}, {"frames", frames}});
  }));

  // export / persistence ---------------------------------------------------
  svr.Post(api + "/export", guarded([this, &s](const Request& req, Response& res) {
    const json b = body_of(req);
    std::vector<ExportKind> kinds;
    for (const json& k : b.value("kinds", json::array({"png", "yolo", "tabular"}))) {
      const auto kind = parse_export_kind(k.get<std::string>());
      if (!kind) fail(ErrorKind::Domain, "unknown export kind " + k.dump());
      kinds.push_back(*kind);
    }
    const fs::path root = b.contains("directory") ? fs::path(b["directory"].get<std::string>())
                                                  : config_.workdir / "exports";
    const ExportReport r = s.export_to(root, kinds);
    json files = json::array();
    for (const auto& f : r.files) files.push_back(f.string());
    send_json(res, {{"directory", r.directory.string()}, {"files", files}, {"warnings", r.warnings}});
  }));
  svr.Post(api + "/session/save", guarded([&s](const Request& req, Response& res) {
    const std::string path = body_of(req).at("path").get<std::string>();
    s.save(path);
    send_json(res, {{"path", path}});
  }));
  svr.Post(api + "/session/load", guarded([&s](const Request& req, Response& res) {
    const json b = body_of(req);
    std::optional<fs::path> remap;
    if (b.contains("media_path") && !b["media_path"].is_null()) remap = b["media_path"].get<std::string>();
    s.load(b.at("path").get<std::string>(), remap);
    send_json(res, {{"session_id", s.read([](const SessionData& d) { return d.session_id; })},
                    {"media", codec::media_json(s.read([](const SessionData& d) { return d.media; }), s.block_plan())}});
  }));

  // monitor and events -----------------------------------------------------
  svr.Get(api + "/monitor", guarded([this](const Request&, Response& res) {
    const auto latest = monitor_ ? monitor_->latest() : std::nullopt;
    if (!latest) {
      ResourceSampler sampler([this] { return backend_->stats(); });
      send_json(res, codec::sample_json(sampler.sample()));
      return;
    }
    send_json(res, codec::sample_json(*latest));
  }));

  svr.Get(api + "/events", [&s](const Request&, Response& res) {
    auto sub = s.events().subscribe();
    res.set_header("Cache-Control", "no-store");
    res.set_chunked_content_provider(
        "text/event-stream", [sub](std::size_t, httplib::DataSink& sink) {
          Event ev;
          if (sub->next(ev, std::chrono::milliseconds(1000))) {
            const std::string msg = "event: " + ev.type + "\ndata: " + ev.data + "\n\n";
            return sink.write(msg.data(), msg.size());
          }
          if (sub->closed()) {
            sink.done();
            return true;
          }
          static const std::string keepalive = ": keepalive\n\n";
          return sink.write(keepalive.data(), keepalive.size());
        });
  });
}

}  // namespace vidanno
