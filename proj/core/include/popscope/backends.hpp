#pragma once

// Client layer over the four external capabilities the pipeline consumes:
// text completion, text embedding, keyword usage counts and post search.
//
// Every request is reduced to a BackendRequest whose canonical serialization
// (sorted keys, compact) is hashed with SHA-256. That digest keys the replay
// fixtures, so a test suite can run the whole pipeline with no network:
//
//   <fixture_dir>/<endpoint_id>/<digest>.json   {request, response, recorded_at}
//
// Live   - talk to the configured endpoint.
// Record - talk to the endpoint and write the fixture file.
// Replay - serve from fixtures only; a miss is an error, never a live call.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "popscope/post.hpp"
#include "popscope/time.hpp"

namespace popscope {

using Matrix = Eigen::MatrixXd;

enum class RequestKind { Complete, Embed, Counts, Search };
std::string_view to_string(RequestKind kind);

struct BackendRequest {
  RequestKind kind = RequestKind::Complete;
  std::string endpoint_id;
  nlohmann::json payload;

  /// Compact JSON with object keys in sorted order. Equal payloads give equal bytes.
  std::string canonical() const;
  std::string digest() const;
};

inline constexpr int kMaxSampleCount = 128;

struct GenerationParams {
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 256;
  int sample_count = 1;
  std::vector<std::string> stop_sequences;

  /// Throws InvalidArgument naming the offending field.
  void validate(int sample_cap = kMaxSampleCount) const;
};

void to_json(nlohmann::json& j, const GenerationParams& p);
void from_json(const nlohmann::json& j, GenerationParams& p);

/// Cuts `text` at the first occurrence of any stop sequence.
std::string truncate_at_stop(std::string text, const std::vector<std::string>& stops);

struct CountSeries {
  std::string keyword;
  Date start_day{};
  Date end_day{};
  std::vector<std::pair<Date, std::int64_t>> daily;
  std::int64_t total = 0;

  /// Checks consecutive in-window days, non-negative counts and total = sum.
  void validate() const;
};

void to_json(nlohmann::json& j, const CountSeries& s);
void from_json(const nlohmann::json& j, CountSeries& s);

enum class BackendMode { Live, Record, Replay };
std::string_view to_string(BackendMode mode);
BackendMode parse_backend_mode(std::string_view text);

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

class Transport {
 public:
  virtual ~Transport() = default;
  /// Throws TransportError when no response was obtained at all.
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const HeaderList& headers) = 0;
};

/// POSTs JSON over HTTP(S) via cpp-httplib.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(60));
  HttpResponse post(const std::string& url, const std::string& body,
                    const HeaderList& headers) override;

 private:
  std::chrono::seconds timeout_;
};

/// Directory of recorded request/response pairs, keyed by request digest.
class ReplayFixture {
 public:
  explicit ReplayFixture(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(const BackendRequest& request) const;

  std::optional<nlohmann::json> load(const BackendRequest& request) const;
  void save(const BackendRequest& request, const nlohmann::json& response,
            Timestamp recorded_at) const;

 private:
  std::filesystem::path root_;
};

/// Token bucket with a burst of one: successive acquire() calls are spaced
/// at least 1/rate apart.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::mutex mutex_;
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_{};
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  /// Replaced in tests so backoff does not actually sleep.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct BackendConfig {
  BackendMode mode = BackendMode::Replay;
  std::filesystem::path fixture_dir = "fixtures";
  std::map<std::string, std::string> urls;  // endpoint_id -> URL
  std::string api_key;
  double rate_limit_rps = 1.0;

  /// Reads POPSCOPE_{COMPLETION,EMBED,COUNTS,SEARCH,PAGEVIEWS}_URL,
  /// POPSCOPE_API_KEY and POPSCOPE_MODE over the given base.
  static BackendConfig from_env(BackendConfig base);
  static BackendConfig from_env();
};

namespace endpoint {
inline constexpr std::string_view kCompletion = "completion";
inline constexpr std::string_view kEmbed = "embed";
inline constexpr std::string_view kCounts = "counts";
inline constexpr std::string_view kPageViews = "pageviews";
inline constexpr std::string_view kSearch = "search";
}  // namespace endpoint

/// Routes requests to transport and/or fixtures according to the mode.
/// Shareable across threads; calls to one endpoint are serialized through
/// that endpoint's rate limiter.
class BackendClient {
 public:
  explicit BackendClient(BackendConfig config, std::shared_ptr<Transport> transport = nullptr);

  nlohmann::json call(const BackendRequest& request);

  BackendMode mode() const { return config_.mode; }
  const BackendConfig& config() const { return config_; }
  void set_retry_policy(RetryPolicy policy) { retry_ = std::move(policy); }
  void set_clock(std::function<Timestamp()> clock) { clock_ = std::move(clock); }

 private:
  nlohmann::json call_live(const BackendRequest& request);
  RateLimiter& limiter_for(const std::string& endpoint_id);

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  ReplayFixture fixture_;
  RetryPolicy retry_;
  std::function<Timestamp()> clock_;
  std::mutex limiters_mutex_;
  std::map<std::string, std::unique_ptr<RateLimiter>> limiters_;
  std::mutex record_mutex_;
};

class CompletionClient {
 public:
  explicit CompletionClient(BackendClient& client,
                            std::string endpoint_id = std::string(endpoint::kCompletion))
      : client_(client), endpoint_id_(std::move(endpoint_id)) {}

  /// Returns exactly params.sample_count strings, each cut at its first stop sequence.
  std::vector<std::string> complete(std::string_view prompt, const GenerationParams& params);

 private:
  BackendClient& client_;
  std::string endpoint_id_;
};

inline constexpr std::size_t kMaxEmbedTextBytes = 32768;

class EmbeddingClient {
 public:
  explicit EmbeddingClient(BackendClient& client,
                           std::string endpoint_id = std::string(endpoint::kEmbed))
      : client_(client), endpoint_id_(std::move(endpoint_id)) {}

  /// One row per input, in input order. The width is pinned by the first
  /// response and every later response must match it.
  Matrix embed(const std::vector<std::string>& texts);
  std::optional<Eigen::Index> width() const { return width_; }

 private:
  BackendClient& client_;
  std::string endpoint_id_;
  std::optional<Eigen::Index> width_;
};

class CountSource {
 public:
  virtual ~CountSource() = default;
  virtual CountSeries counts(const std::string& keyword, Date start_day, Date end_day) = 0;
  virtual std::string_view name() const = 0;
};

/// Per-day post counts from the platform's counts endpoint.
class PostCountSource : public CountSource {
 public:
  explicit PostCountSource(BackendClient& client,
                           std::string endpoint_id = std::string(endpoint::kCounts))
      : client_(client), endpoint_id_(std::move(endpoint_id)) {}
  CountSeries counts(const std::string& keyword, Date start_day, Date end_day) override;
  std::string_view name() const override { return "posts"; }

 private:
  BackendClient& client_;
  std::string endpoint_id_;
};

/// Daily encyclopedia page views for the article named like the keyword.
class PageViewCountSource : public CountSource {
 public:
  explicit PageViewCountSource(BackendClient& client,
                               std::string endpoint_id = std::string(endpoint::kPageViews))
      : client_(client), endpoint_id_(std::move(endpoint_id)) {}
  CountSeries counts(const std::string& keyword, Date start_day, Date end_day) override;
  std::string_view name() const override { return "pageviews"; }

 private:
  BackendClient& client_;
  std::string endpoint_id_;
};

class SearchClient {
 public:
  explicit SearchClient(BackendClient& client,
                        std::string endpoint_id = std::string(endpoint::kSearch))
      : client_(client), endpoint_id_(std::move(endpoint_id)) {}

  /// Up to `limit` posts created on `day` that pass `filter`, ascending by
  /// post id. Each post's keyword is set to `query`.
  std::vector<Post> search(const std::string& query, Date day, const CollectFilter& filter,
                           int limit);

 private:
  BackendClient& client_;
  std::string endpoint_id_;
};

}  // namespace popscope
