#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "popscope/app.hpp"
#include "popscope/error.hpp"
#include "popscope/service.hpp"
#include "support/helpers.hpp"

// After Eigen: resolv.h defines a _res macro that collides with Eigen parameter names.
#include <httplib.h>

using namespace popscope;
using namespace popscope::testing;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    app = replay_app();
    service = std::make_unique<Service>(*app);
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->listen(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    for (int i = 0; i < 100 && !client->Get("/api/health"); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }

  void TearDown() override {
    service->stop();
    thread.join();
  }

  std::pair<int, json> post(const std::string& path, const json& body) {
    auto res = client->Post(path, body.dump(), "application/json");
    if (!res) return {0, json()};
    return {res->status, json::parse(res->body)};
  }

  std::pair<int, json> get(const std::string& path) {
    auto res = client->Get(path);
    if (!res) return {0, json()};
    return {res->status, json::parse(res->body)};
  }

  json run_job(const std::string& path, const json& body) {
    auto [status, accepted] = post(path, body);
    EXPECT_EQ(status, 202);
    service->jobs().wait(accepted["job_id"]);
    auto [st, job] = get(accepted["status_url"]);
    EXPECT_EQ(st, 200);
    EXPECT_EQ(job["status"], "succeeded") << job.dump();
    return job["result"];
  }

  std::unique_ptr<App> app;
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;
  std::thread thread;
  int port = 0;
};

}  // namespace

TEST_F(ServiceTest, Health) {
  auto [status, body] = get("/api/health");
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body["status"], "ok");
  EXPECT_EQ(body["version"], kVersion);
}

TEST_F(ServiceTest, SuggestMatchesLibrary) {
  const json req{{"topic", "Here's a short list of exotic pets"}, {"samples", 1}};
  auto [status, body] = post("/api/keywords/suggest", req);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body, app->suggest(req));
  EXPECT_EQ(body["candidates"][1]["surface"], "Monkeys");
}

TEST_F(ServiceTest, ErrorStatuses) {
  EXPECT_EQ(post("/api/keywords/suggest", json::object()).first, 400);
  auto res = client->Post("/api/keywords/suggest", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  auto [miss, body] = post("/api/keywords/suggest", {{"topic", "never recorded"}});
  EXPECT_EQ(miss, 502);
  EXPECT_EQ(body["error"]["kind"], "FixtureMiss");
  EXPECT_EQ(get("/api/projection/none/points").first, 404);
  EXPECT_EQ(get("/api/jobs/job-404").first, 404);
  EXPECT_EQ(get("/api/probe/probe-1/report?threshold=abc").first, 400);
}

TEST_F(ServiceTest, FullChainOverHttp) {
  auto collected = run_job("/api/collect", scenario_collect_request());
  EXPECT_EQ(collected["total_stored"], 300);
  EXPECT_EQ(run_job("/api/embed", json::object())["embedded"], 300);
  auto proj = run_job("/api/projection/run", {{"run_id", "r"}, {"tsne", {{"iterations", 400}}}});
  EXPECT_EQ(proj["points"], 300);

  const json creq{{"run_id", "r"}, {"eps", 3.0}, {"min_pts", 5}};
  auto [s1, c1] = post("/api/cluster", creq);
  auto [s2, c2] = post("/api/cluster", creq);
  EXPECT_EQ(s1, 200);
  EXPECT_EQ(c1["labels"], c2["labels"]);

  auto [ps, pts] = get("/api/projection/r/points");
  EXPECT_EQ(ps, 200);
  const auto before = pts["candidate_count"].get<std::int64_t>();
  auto [es, ex] = post("/api/exclude", {{"run_id", "r"}, {"labels", {0}}});
  EXPECT_EQ(es, 200);
  EXPECT_EQ(ex["candidate_count"].get<std::int64_t>(), before - c1["sizes"]["0"].get<std::int64_t>());

  TempDir out;
  auto [bs, manifest] = post("/api/corpus/build", {{"run_id", "r"}, {"output_dir", out.path().string()}});
  EXPECT_EQ(bs, 200);
  EXPECT_EQ(manifest["counts"]["candidates"], ex["candidate_count"]);

  auto probe = run_job("/api/probe/run", {{"probes", "Ivermectin, Paxlovid"}, {"samples_per_probe", 50}});
  auto [rs, report] = get("/api/probe/" + probe["probe_run_id"].get<std::string>() + "/report");
  EXPECT_EQ(rs, 200);
  EXPECT_EQ(report["max_abs_deviation_pct"], 4.0);
  EXPECT_EQ(report["passed"], true);
  auto [ts2, strict] = get("/api/probe/" + probe["probe_run_id"].get<std::string>() + "/report?threshold=3");
  EXPECT_EQ(strict["passed"], false);
}

TEST_F(ServiceTest, FailedJobCarriesErrorKind) {
  auto [status, accepted] = post("/api/projection/run", {{"run_id", "r"}});
  ASSERT_EQ(status, 202);
  auto job = service->jobs().wait(accepted["job_id"]);
  EXPECT_EQ(job["status"], "failed");
  EXPECT_EQ(job["error"]["kind"], "InsufficientData");
}

TEST(ServiceBind, BusyPortIsError) {
  auto app = replay_app();
  Service a(*app);
  const int port = a.bind("127.0.0.1", 0);
  Service b(*app);
  EXPECT_THROW(b.bind("127.0.0.1", port), popscope::Error);
}

TEST(ServiceStatic, ServesMountedDirectory) {
  TempDir dir;
  std::ofstream(dir / "index.html") << "<html>ui</html>";
  AppConfig cfg;
  cfg.store_path = ":memory:";
  cfg.backend = replay_config(shipped_fixtures());
  cfg.static_dir = dir.path();
  App app(cfg, std::make_shared<PanicTransport>());
  Service service(app);
  const int port = service.bind("127.0.0.1", 0);
  std::thread t([&] { service.listen(); });
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !(res = client.Get("/index.html")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, "<html>ui</html>");
  service.stop();
  t.join();
}
