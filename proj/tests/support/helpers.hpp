#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/app.hpp"
#include "popscope/backends.hpp"
#include "popscope/post.hpp"
#include "popscope/time.hpp"

namespace popscope::testing {

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Fails the test on any use. Proves that replay never reaches the network.
class PanicTransport : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string&, const HeaderList&) override;
};

/// Answers through a callback and counts calls.
class FunctionTransport : public Transport {
 public:
  using Handler = std::function<HttpResponse(const std::string& url, const nlohmann::json& body)>;
  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}
  HttpResponse post(const std::string& url, const std::string& body, const HeaderList&) override;
  int calls() const { return calls_; }

 private:
  Handler handler_;
  std::atomic<int> calls_{0};
};

/// Writes a fixture file for `payload` under `root`, the way Record would.
void write_fixture(const std::filesystem::path& root, RequestKind kind, std::string_view endpoint_id,
                   const nlohmann::json& payload, const nlohmann::json& response);

BackendConfig replay_config(const std::filesystem::path& fixture_dir);

Timestamp ts(std::string_view text);  // "YYYY-MM-DD HH:MM:SS"
Date day(std::string_view text);

Post make_post(std::string id, std::string text, std::string_view created, std::string keyword = "k",
               std::string lang = "en");

/// Bundled fixture directory and test data directory.
std::filesystem::path shipped_fixtures();
std::filesystem::path test_data(const std::string& name);

/// App over the shipped fixtures in replay mode, with a fixed clock.
std::unique_ptr<App> replay_app(const std::filesystem::path& store_path = ":memory:");

/// The collect request the shipped fixtures were recorded with.
nlohmann::json scenario_collect_request();

/// Replays collect and embed so the store holds the 300 embedded posts.
void load_scenario_posts(App& app);

}  // namespace popscope::testing
