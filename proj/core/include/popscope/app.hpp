#pragma once

// Application layer shared by the command line and the HTTP service. Every
// operation takes and returns JSON, so the two front ends are thin adapters
// over the same calls.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "popscope/backends.hpp"
#include "popscope/store.hpp"

namespace popscope {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kDefaultModelTag = "default";
inline constexpr int kEmbedBatchSize = 64;

/// Keys accepted in a --config file: store_path, fixture_dir, mode, urls
/// (object keyed by endpoint id), rate_limit_rps, ui_port, bind_host,
/// static_dir. Credentials are read from the environment only.
struct AppConfig {
  std::filesystem::path store_path = "popscope.db";
  BackendConfig backend;
  int ui_port = 8765;
  std::string bind_host = "127.0.0.1";
  std::filesystem::path static_dir;

  void validate() const;
  /// Defaults, then the optional file, then POPSCOPE_* environment variables.
  static AppConfig load(const std::optional<std::filesystem::path>& config_file);
  void merge_file(const nlohmann::json& j);
};

using Clock = std::function<Timestamp()>;
Timestamp system_now();

class App {
 public:
  explicit App(AppConfig config, std::shared_ptr<Transport> transport = nullptr,
               Clock clock = system_now);

  const AppConfig& config() const { return config_; }
  Store& store() { return store_; }
  BackendClient& backend() { return *backend_; }
  Timestamp now() const { return clock_(); }

  nlohmann::json health() const;

  // {topic, samples?, params?} -> {prompt, candidates, warnings}
  nlohmann::json suggest(const nlohmann::json& req);
  // {candidates | keywords, start?, end?, source?: posts|pageviews} -> {start, end, source, reports}
  nlohmann::json validate(const nlohmann::json& req);
  // {keyword, start, end, base_url?} -> {urls:[{day, url}]}
  nlohmann::json context(const nlohmann::json& req);
  // {keywords, start, end, mode, day_cap, keyword_cap, lang?, location?, no_reposts?, seed?}
  nlohmann::json collect(const nlohmann::json& req);
  // {model_tag?, batch_size?} -> {model_tag, embedded, total}
  nlohmann::json embed(const nlohmann::json& req);
  // {run_id, model_tag?, pca_k?, tsne?} -> ProjectionSummary
  nlohmann::json project(const nlohmann::json& req);
  // -> {run_id, points:[{post_id, x, y, label, excluded, text}], candidate_count}
  nlohmann::json points(const std::string& run_id);
  // {run_id, eps, min_pts} -> {run_id, labels, n_clusters, sizes}
  nlohmann::json cluster(const nlohmann::json& req);
  // {run_id, labels, excluded?} -> {run_id, rows_updated, candidate_count}
  nlohmann::json exclude(const nlohmann::json& req);
  // {run_id, output_dir, seed?, train_fraction?, include_location?, include_noise?} -> manifest
  nlohmann::json corpus_build(const nlohmann::json& req);
  // {probes, samples_per_probe?, params?} -> ProbeRunResult
  nlohmann::json probe_run(const nlohmann::json& req);
  // sanity_check + tag distribution
  nlohmann::json probe_report(const std::string& probe_run_id, double threshold_pct);

 private:
  AppConfig config_;
  Clock clock_;
  Store store_;
  std::unique_ptr<BackendClient> backend_;
};

/// A single worker thread that runs submitted operations one after another.
class JobQueue {
 public:
  enum class Status { Queued, Running, Succeeded, Failed };

  JobQueue();
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  std::string submit(std::string kind, std::function<nlohmann::json()> work);
  /// {id, kind, status, result?, error?}; nullopt for an unknown id.
  std::optional<nlohmann::json> status(const std::string& id) const;
  /// Blocks until the job leaves the queue. Used by tests and the CLI.
  nlohmann::json wait(const std::string& id);

 private:
  struct Job {
    std::string id;
    std::string kind;
    Status status = Status::Queued;
    std::function<nlohmann::json()> work;
    nlohmann::json result;
    nlohmann::json error;
  };
  void run();
  static nlohmann::json describe(const Job& job);

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> pending_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::thread worker_;
};

/// {kind, message} for an exception, with the kind naming the error class.
nlohmann::json error_body(const std::exception& e);

}  // namespace popscope
