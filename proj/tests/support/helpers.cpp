#include "support/helpers.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <unistd.h>

namespace popscope::testing {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("popscope-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

HttpResponse PanicTransport::post(const std::string& url, const std::string&, const HeaderList&) {
  ADD_FAILURE() << "network access attempted: " << url;
  throw std::logic_error("network access attempted in replay: " + url);
}

HttpResponse FunctionTransport::post(const std::string& url, const std::string& body,
                                     const HeaderList&) {
  ++calls_;
  return handler_(url, nlohmann::json::parse(body));
}

void write_fixture(const std::filesystem::path& root, RequestKind kind, std::string_view endpoint_id,
                   const nlohmann::json& payload, const nlohmann::json& response) {
  ReplayFixture fixture(root);
  fixture.save(BackendRequest{kind, std::string(endpoint_id), payload}, response,
               ts("2022-12-28 00:00:00"));
}

BackendConfig replay_config(const std::filesystem::path& fixture_dir) {
  BackendConfig c;
  c.mode = BackendMode::Replay;
  c.fixture_dir = fixture_dir;
  return c;
}

Timestamp ts(std::string_view text) {
  auto t = try_parse_timestamp(text);
  if (!t) throw std::invalid_argument("bad timestamp literal " + std::string(text));
  return *t;
}

Date day(std::string_view text) { return parse_date(text); }

Post make_post(std::string id, std::string text, std::string_view created, std::string keyword,
               std::string lang) {
  Post p;
  p.post_id = std::move(id);
  p.text = std::move(text);
  p.created_at = ts(created);
  p.author_id = "author-" + p.post_id;
  p.lang = std::move(lang);
  p.keyword = std::move(keyword);
  return p;
}

std::filesystem::path shipped_fixtures() { return POPSCOPE_FIXTURE_DIR; }
std::filesystem::path test_data(const std::string& name) {
  return std::filesystem::path(POPSCOPE_TEST_DATA_DIR) / name;
}


std::unique_ptr<App> replay_app(const std::filesystem::path& store_path) {
  AppConfig cfg;
  cfg.store_path = store_path;
  cfg.backend = replay_config(shipped_fixtures());
  return std::make_unique<App>(cfg, std::make_shared<PanicTransport>(),
                               [] { return ts("2022-12-28 00:00:00"); });
}

nlohmann::json scenario_collect_request() {
  return {{"keywords", {"Monkeys", "Snakes", "Bats"}},
          {"start", "2022-12-17"},
          {"end", "2022-12-27"},
          {"mode", "uniform"},
          {"day_cap", 12},
          {"keyword_cap", 100},
          {"lang", "en"}};
}

void load_scenario_posts(App& app) {
  app.collect(scenario_collect_request());
  app.embed(nlohmann::json::object());
}

}  // namespace popscope::testing
