#include <gtest/gtest.h>

#include <atomic>

#include <httplib.h>
#include <json.hpp>

#include "vidanno/service.hpp"
#include "expect_error.hpp"
#include "scene_fixture.hpp"

using namespace vidanno;
using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct Api {
  httplib::Client cli;
  explicit Api(int port) : cli("127.0.0.1", port) { cli.set_read_timeout(30, 0); }

  std::pair<int, json> call(const std::string& method, const std::string& path, const json& body = nullptr) {
    const std::string url = std::string(kApiPrefix) + path;
    const std::string text = body.is_null() ? "" : body.dump();
    httplib::Result r = method == "GET"     ? cli.Get(url)
                        : method == "POST"  ? cli.Post(url, text, "application/json")
                        : method == "PUT"   ? cli.Put(url, text, "application/json")
                        : method == "PATCH" ? cli.Patch(url, text, "application/json")
                                            : cli.Delete(url);
    if (!r) return {-1, nullptr};
    json j = r->body.empty() || r->get_header_value("Content-Type") != "application/json"
                 ? json(nullptr)
                 : json::parse(r->body);
    return {r->status, j};
  }

  json wait_job(std::uint64_t id) {
    for (;;) {
      auto [st, j] = call("GET", "/jobs/" + std::to_string(id));
      if (st != 200 || j["status"] != "running") return j;
      std::this_thread::sleep_for(10ms);
    }
  }
};

synth::SceneConfig scene_cfg(int frames) {
  synth::SceneConfig c;
  c.frames = frames;
  c.width = 64;
  c.height = 48;
  c.blobs = 2;
  c.radius = 6;
  c.max_step = 2;
  return c;
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override { start(nullptr); }

  void start(std::shared_ptr<Backend> backend) {
    scene = synth::make_scene(scene_cfg(40));
    synth::write_scene(scene, dir.path() / "frames", dir.path() / "gt");
    ServiceConfig c;
    c.port = 0;
    c.workdir = dir.path() / "work";
    c.monitor_rate_hz = 20;
    service = std::make_unique<Service>(c, std::move(backend));
    api = std::make_unique<Api>(service->start());
  }

  void load_and_label() {
    auto [st, media] = api->call("POST", "/media", {{"path", (dir.path() / "frames").string()}, {"block_size", 20}});
    ASSERT_EQ(st, 200) << media.dump();
    ASSERT_EQ(api->call("POST", "/labels", {{"name", "left"}}).first, 201);
    ASSERT_EQ(api->call("POST", "/labels", {{"name", "right"}}).first, 201);
    for (int b = 0; b < 2; ++b) {
      const Pixel c = scene.centers[0][b];
      auto [ps, p] = api->call("POST", "/prompts", {{"frame", 0}, {"label_id", b + 1}, {"point", {c.x, c.y}}, {"sign", "positive"}});
      ASSERT_EQ(ps, 201) << p.dump();
    }
  }

  TempDir dir;
  synth::Scene scene;
  std::unique_ptr<Service> service;
  std::unique_ptr<Api> api;
};

}  // namespace

TEST_F(ServiceTest, HealthIsOk) {
  auto [st, j] = api->call("GET", "/health");
  EXPECT_EQ(st, 200);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["media_loaded"], false);
}

TEST_F(ServiceTest, SecondServiceOnSamePortFails) {
  ServiceConfig c;
  c.port = service->port();
  c.workdir = dir.path() / "other";
  Service second(c);
  EXPECT_EQ(error_kind([&] { second.bind(); }), ErrorKind::Io);
}

TEST_F(ServiceTest, MediaAndFrames) {
  load_and_label();
  auto [st, m] = api->call("GET", "/media");
  EXPECT_EQ(st, 200);
  EXPECT_EQ(m["frames"], 40);
  EXPECT_EQ(m["blocks"], json::parse("[[0,19],[20,39]]"));
  auto r = api->cli.Get(std::string(kApiPrefix) + "/frames/3?mode=original");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(r->body.substr(1, 3), "PNG");
  auto [os, oj] = api->call("GET", "/frames/3?mode=overlay");
  EXPECT_EQ(os, 409);
  EXPECT_EQ(oj["error"]["kind"], "state");
  EXPECT_EQ(api->call("GET", "/frames/3?mode=sepia").first, 400);
  EXPECT_EQ(api->call("GET", "/frames/x").first, 400);
}

TEST_F(ServiceTest, PropagateAndInspect) {
  load_and_label();
  auto [st, job] = api->call("POST", "/propagate", {{"mode", "forward"}, {"t_curr", 0}});
  ASSERT_EQ(st, 202) << job.dump();
  const json done = api->wait_job(job["job_id"].get<std::uint64_t>());
  EXPECT_EQ(done["status"], "done");
  EXPECT_EQ(done["progress"], 1.0);
  EXPECT_GT(done["auto_prompts_added"].get<int>(), 0);

  auto r = api->cli.Get(std::string(kApiPrefix) + "/frames/5?mode=overlay");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);

  ASSERT_EQ(api->call("PUT", "/checkpoints/0").first, 204);
  auto [ts, tl] = api->call("GET", "/timeline/0?label_id=1&cursor=4");
  ASSERT_EQ(ts, 200);
  ASSERT_EQ(tl["frames"].size(), 20u);
  const json& f0 = tl["frames"][0];
  EXPECT_TRUE(f0["has_user_prompt"]);
  EXPECT_TRUE(f0["has_mask"]);
  EXPECT_TRUE(f0["is_checkpoint"]);
  EXPECT_TRUE(tl["frames"][4]["is_cursor"]);
  auto [t1s, t1] = api->call("GET", "/timeline/1?label_id=1");
  EXPECT_FALSE(t1["frames"][0]["has_user_prompt"]);  // auto prompts are not user prompts
  EXPECT_TRUE(t1["frames"][0]["has_prompt_for_active_label"]);

  auto [ps, prompts] = api->call("GET", "/prompts?frame=20");
  EXPECT_EQ(ps, 200);
  for (const auto& p : prompts) EXPECT_EQ(p["origin"], "auto");

  auto [as, act] = api->call("POST", "/blocks/1/activate");
  EXPECT_EQ(as, 200);
  EXPECT_EQ(act["start"], 20);
  EXPECT_EQ(api->call("GET", "/settings").second["cursor"], 20);
  auto [fs2, job2] = api->call("POST", "/propagate", {{"mode", "forward"}, {"t_curr", 20}});
  ASSERT_EQ(fs2, 202);
  EXPECT_EQ(api->wait_job(job2["job_id"].get<std::uint64_t>())["status"], "done");

  auto [ms, stats] = api->call("GET", "/media/stats");
  EXPECT_EQ(ms, 200);
  EXPECT_LE(stats["peak_resident_frames"].get<int>(), 21);
}

TEST_F(ServiceTest, ErrorsMapToStatusCodes) {
  EXPECT_EQ(api->call("POST", "/propagate", {{"mode", "forward"}, {"t_curr", 0}}).first, 409);  // no media
  load_and_label();
  EXPECT_EQ(api->call("POST", "/propagate", {{"mode", "sideways"}, {"t_curr", 0}}).first, 400);
  EXPECT_EQ(api->call("POST", "/propagate", {{"mode", "singular"}, {"t_curr", 3}}).first, 422);
  EXPECT_EQ(api->call("GET", "/jobs/99").first, 404);
  EXPECT_EQ(api->call("POST", "/labels", {{"name", "left"}}).first, 409);
  EXPECT_EQ(api->call("PATCH", "/labels/7", {{"name", "x"}}).first, 404);
  EXPECT_EQ(api->call("POST", "/prompts", {{"frame", 0}, {"label_id", 1}, {"point", {999, 0}}}).first, 400);
  EXPECT_EQ(api->call("POST", "/prompts", {{"frame", 0}}).first, 400);
  auto r = api->cli.Post(std::string(kApiPrefix) + "/labels", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(api->call("DELETE", "/prompts/1").first, 204);
  EXPECT_EQ(api->call("DELETE", "/prompts/1").first, 404);
}

TEST_F(ServiceTest, FeaturesAndSettings) {
  load_and_label();
  EXPECT_EQ(api->call("POST", "/features", {{"name", "pose"}}).first, 201);
  auto [es, edit] = api->call("POST", "/feature-edits", {{"feature", "pose"}, {"label_id", 1}, {"frame", 5}, {"value", "sitting"}});
  ASSERT_EQ(es, 201);
  EXPECT_EQ(api->call("GET", "/features/pose/value?label_id=1&frame=30").second["value"], "sitting");
  EXPECT_TRUE(api->call("GET", "/features/pose/value?label_id=1&frame=4").second["value"].is_null());
  EXPECT_EQ(api->call("DELETE", "/feature-edits/" + std::to_string(edit["id"].get<int>())).first, 204);
  EXPECT_TRUE(api->call("GET", "/features/pose/value?label_id=1&frame=30").second["value"].is_null());

  auto [ss, st] = api->call("PATCH", "/settings", {{"auto_prompt", false}, {"view_mode", "masks"}});
  EXPECT_EQ(ss, 200);
  EXPECT_EQ(st["auto_prompt"], false);
  EXPECT_EQ(st["view_mode"], "masks");
  EXPECT_EQ(api->call("PATCH", "/settings", {{"colour", 1}}).first, 400);
}

TEST_F(ServiceTest, ExportSaveLoad) {
  load_and_label();
  auto [st, job] = api->call("POST", "/propagate", {{"mode", "all"}, {"t_curr", 0}});
  ASSERT_EQ(st, 202);
  api->wait_job(job["job_id"].get<std::uint64_t>());
  auto [xs, ex] = api->call("POST", "/export", {{"kinds", {"png", "tabular"}}, {"directory", (dir.path() / "out").string()}});
  ASSERT_EQ(xs, 200) << ex.dump();
  EXPECT_TRUE(fs::exists(fs::path(ex["directory"].get<std::string>()) / "labels.csv"));
  EXPECT_EQ(api->call("POST", "/export", {{"kinds", {"gif"}}}).first, 400);

  const std::string file = (dir.path() / "s.json").string();
  EXPECT_EQ(api->call("POST", "/session/save", {{"path", file}}).first, 200);
  auto [ls, loaded] = api->call("POST", "/session/load", {{"path", file}});
  EXPECT_EQ(ls, 200) << loaded.dump();
  EXPECT_EQ(loaded["media"]["frames"], 40);
  EXPECT_EQ(api->call("POST", "/session/load", {{"path", (dir.path() / "missing.json").string()}}).first, 500);
}

TEST_F(ServiceTest, EventsStreamMutations) {
  std::atomic<bool> saw_label{false}, saw_monitor{false};
  std::atomic<bool> stop{false};
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", service->port());
    c.Get(std::string(kApiPrefix) + "/events", [&](const char* data, std::size_t n) {
      const std::string chunk(data, n);
      if (chunk.find("event: labels") != std::string::npos) saw_label = true;
      if (chunk.find("event: monitor") != std::string::npos) saw_monitor = true;
      return !stop.load();
    });
  });
  std::this_thread::sleep_for(200ms);
  ASSERT_EQ(api->call("POST", "/labels", {{"name", "x"}}).first, 201);
  for (int i = 0; i < 100 && !(saw_label && saw_monitor); ++i) std::this_thread::sleep_for(20ms);
  stop = true;
  EXPECT_TRUE(saw_label);
  EXPECT_TRUE(saw_monitor);
  service->stop();
  reader.join();
}

TEST_F(ServiceTest, MonitorEndpoint) {
  auto [st, m] = api->call("GET", "/monitor");
  EXPECT_EQ(st, 200);
  EXPECT_GT(m["rss_mib"].get<double>(), 0);
  EXPECT_TRUE(m["vram_mib"].is_null());
}

class BusyServiceTest : public ServiceTest {
 protected:
  void SetUp() override {
    slow = std::make_shared<ThrottledBackend>(std::make_shared<ReferenceBackend>());
    slow->delay = 10ms;
    start(slow);
  }
  std::shared_ptr<ThrottledBackend> slow;
};

TEST_F(BusyServiceTest, MutationsDuringJobAreBusy) {
  load_and_label();
  auto [st, job] = api->call("POST", "/propagate", {{"mode", "forward"}, {"t_curr", 0}});
  ASSERT_EQ(st, 202);
  auto [bs, busy] = api->call("POST", "/propagate", {{"mode", "forward"}, {"t_curr", 0}});
  EXPECT_EQ(bs, 409);
  EXPECT_EQ(busy["error"]["kind"], "busy");
  EXPECT_EQ(api->call("PUT", "/checkpoints/3").first, 409);
  EXPECT_EQ(api->call("GET", "/health").first, 200);
  const auto id = job["job_id"].get<std::uint64_t>();
  EXPECT_EQ(api->call("POST", "/jobs/" + std::to_string(id) + "/cancel").first, 202);
  EXPECT_EQ(api->wait_job(id)["status"], "cancelled");
  EXPECT_EQ(api->call("POST", "/jobs/" + std::to_string(id) + "/cancel").first, 404);
}

TEST(ServiceRemote, UnreachableBackendIsDegraded) {
  TempDir dir;
  ServiceConfig c;
  c.port = 0;
  c.workdir = dir.path();
  c.backend = "remote";
  c.backend_address = "127.0.0.1:1";
  Service svc(c);
  Api api(svc.start());
  auto [st, h] = api.call("GET", "/health");
  EXPECT_EQ(h["status"], "degraded");
  EXPECT_EQ(api.call("POST", "/labels", {{"name", "still works"}}).first, 201);
}

TEST(ServiceConfigTest, Parsing) {
  const ServiceConfig c = parse_service_config(
      R"({"port": 9000, "workdir": "/tmp/w", "backend": "remote", "backend_address": "10.0.0.2:7000",
          "cache_capacity": 8, "monitor_rate_hz": 2.5, "monitor_csv": "/tmp/m.csv"})");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.backend_address, "10.0.0.2:7000");
  EXPECT_EQ(c.cache_capacity, 8u);
  EXPECT_EQ(c.monitor_csv, fs::path("/tmp/m.csv"));
  EXPECT_EQ(error_kind([] { parse_service_config(R"({"prot": 1})"); }), ErrorKind::Format);
  EXPECT_EQ(error_kind([] { parse_service_config(R"({"backend": "gpu"})"); }), ErrorKind::Format);
  EXPECT_EQ(error_kind([] { parse_service_config(R"({"port": "x"})"); }), ErrorKind::Format);
  EXPECT_TRUE(error_kind([] { parse_service_config(R"({"backend": "remote"})"); }));
}
