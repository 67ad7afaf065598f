#include "popscope/backends.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "popscope/digest.hpp"
#include "popscope/error.hpp"

namespace popscope {

using nlohmann::json;

std::string_view to_string(RequestKind kind) {
  switch (kind) {
    case RequestKind::Complete: return "complete";
    case RequestKind::Embed: return "embed";
    case RequestKind::Counts: return "counts";
    case RequestKind::Search: return "search";
  }
  return "unknown";
}

std::string BackendRequest::canonical() const {
  // json objects are std::map-backed, so dump() emits keys in sorted order.
  json doc{{"kind", to_string(kind)}, {"endpoint_id", endpoint_id}, {"payload", payload}};
  return doc.dump();
}

std::string BackendRequest::digest() const { return sha256_hex(canonical()); }

// ---------------------------------------------------------------------------

void GenerationParams::validate(int sample_cap) const {
  if (!(temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw InvalidArgument("max_tokens must be positive");
  if (sample_count <= 0) throw InvalidArgument("sample_count must be positive");
  if (sample_count > sample_cap) {
    throw InvalidArgument("sample_count " + std::to_string(sample_count) + " exceeds the cap of " +
                          std::to_string(sample_cap));
  }
  for (const auto& s : stop_sequences) {
    if (s.empty()) throw InvalidArgument("stop sequences must be non-empty");
  }
}

void to_json(json& j, const GenerationParams& p) {
  j = json{{"temperature", p.temperature},
           {"top_p", p.top_p},
           {"max_tokens", p.max_tokens},
           {"sample_count", p.sample_count},
           {"stop_sequences", p.stop_sequences}};
}

void from_json(const json& j, GenerationParams& p) {
  GenerationParams d;
  p.temperature = j.value("temperature", d.temperature);
  p.top_p = j.value("top_p", d.top_p);
  p.max_tokens = j.value("max_tokens", d.max_tokens);
  p.sample_count = j.value("sample_count", d.sample_count);
  p.stop_sequences = j.value("stop_sequences", d.stop_sequences);
}

std::string truncate_at_stop(std::string text, const std::vector<std::string>& stops) {
  std::size_t cut = text.size();
  for (const auto& s : stops) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  text.resize(std::min(cut, text.size()));
  return text;
}

// ---------------------------------------------------------------------------

void CountSeries::validate() const {
  if (start_day > end_day) throw InvalidArgument("count series window starts after it ends");
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < daily.size(); ++i) {
    const auto& [day, count] = daily[i];
    if (day < start_day || day > end_day) {
      throw ProtocolError("count for " + format_date(day) + " lies outside the window");
    }
    if (i > 0 && day != daily[i - 1].first + std::chrono::days{1}) {
      throw ProtocolError("count series days are not consecutive at " + format_date(day));
    }
    if (count < 0) throw ProtocolError("negative count on " + format_date(day));
    sum += count;
  }
  if (sum != total) {
    throw ProtocolError("count series total " + std::to_string(total) +
                        " does not equal the daily sum " + std::to_string(sum));
  }
}

void to_json(json& j, const CountSeries& s) {
  json daily = json::array();
  for (const auto& [day, count] : s.daily) daily.push_back({format_date(day), count});
  j = json{{"keyword", s.keyword},
           {"start_day", format_date(s.start_day)},
           {"end_day", format_date(s.end_day)},
           {"daily", std::move(daily)},
           {"total", s.total}};
}

void from_json(const json& j, CountSeries& s) {
  s.keyword = j.at("keyword").get<std::string>();
  s.start_day = parse_date(j.at("start_day").get<std::string>());
  s.end_day = parse_date(j.at("end_day").get<std::string>());
  s.daily.clear();
  for (const auto& e : j.at("daily")) {
    s.daily.emplace_back(parse_date(e.at(0).get<std::string>()), e.at(1).get<std::int64_t>());
  }
  s.total = j.at("total").get<std::int64_t>();
}

// ---------------------------------------------------------------------------

std::string_view to_string(BackendMode mode) {
  switch (mode) {
    case BackendMode::Live: return "live";
    case BackendMode::Record: return "record";
    case BackendMode::Replay: return "replay";
  }
  return "unknown";
}

BackendMode parse_backend_mode(std::string_view text) {
  if (text == "live") return BackendMode::Live;
  if (text == "record") return BackendMode::Record;
  if (text == "replay") return BackendMode::Replay;
  throw InvalidArgument("backend mode must be live, record or replay, got '" + std::string(text) +
                        "'");
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpResponse HttpTransport::post(const std::string& url, const std::string& body,
                                 const HeaderList& headers) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL lacks a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  std::string origin = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client cli(origin);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  httplib::Headers hs;
  for (const auto& [k, v] : headers) hs.emplace(k, v);
  auto res = cli.Post(path, hs, body, "application/json");
  if (!res) {
    throw TransportError("POST " + url + " failed: " + httplib::to_string(res.error()), 0, 1);
  }
  return HttpResponse{res->status, res->body};
}

// ---------------------------------------------------------------------------

ReplayFixture::ReplayFixture(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ReplayFixture::path_for(const BackendRequest& request) const {
  return root_ / request.endpoint_id / (request.digest() + ".json");
}

std::optional<json> ReplayFixture::load(const BackendRequest& request) const {
  auto path = path_for(request);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ProtocolError("fixture " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("response")) throw ProtocolError("fixture " + path.string() + " has no response");
  return doc["response"];
}

void ReplayFixture::save(const BackendRequest& request, const json& response,
                         Timestamp recorded_at) const {
  auto path = path_for(request);
  std::filesystem::create_directories(path.parent_path());
  json doc{{"request",
            {{"kind", to_string(request.kind)},
             {"endpoint_id", request.endpoint_id},
             {"payload", request.payload}}},
           {"response", response},
           {"recorded_at", format_iso8601(recorded_at)}};
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write fixture " + tmp.string());
    out << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_second) {
  if (!(requests_per_second > 0)) throw InvalidArgument("rate limit must be positive");
  interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / requests_per_second));
}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

// ---------------------------------------------------------------------------

BackendConfig BackendConfig::from_env(BackendConfig base) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  const std::pair<const char*, std::string_view> url_vars[] = {
      {"POPSCOPE_COMPLETION_URL", endpoint::kCompletion},
      {"POPSCOPE_EMBED_URL", endpoint::kEmbed},
      {"POPSCOPE_COUNTS_URL", endpoint::kCounts},
      {"POPSCOPE_PAGEVIEWS_URL", endpoint::kPageViews},
      {"POPSCOPE_SEARCH_URL", endpoint::kSearch},
  };
  for (const auto& [var, id] : url_vars) {
    if (auto v = env(var)) base.urls[std::string(id)] = *v;
  }
  if (auto v = env("POPSCOPE_API_KEY")) base.api_key = *v;
  if (auto v = env("POPSCOPE_MODE")) base.mode = parse_backend_mode(*v);
  return base;
}

BackendConfig BackendConfig::from_env() { return from_env(BackendConfig{}); }

BackendClient::BackendClient(BackendConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      fixture_(config_.fixture_dir),
      clock_([] { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); }) {
  if (config_.mode != BackendMode::Replay && !transport_) {
    transport_ = std::make_shared<HttpTransport>();
  }
  retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (!(config_.rate_limit_rps > 0)) throw InvalidArgument("rate_limit_rps must be positive");
}

RateLimiter& BackendClient::limiter_for(const std::string& endpoint_id) {
  std::lock_guard lock(limiters_mutex_);
  auto& slot = limiters_[endpoint_id];
  if (!slot) slot = std::make_unique<RateLimiter>(config_.rate_limit_rps);
  return *slot;
}

json BackendClient::call(const BackendRequest& request) {
  switch (config_.mode) {
    case BackendMode::Replay: {
      auto hit = fixture_.load(request);
      if (!hit) throw FixtureMiss(request.endpoint_id, request.digest());
      return *hit;
    }
    case BackendMode::Live:
      return call_live(request);
    case BackendMode::Record: {
      auto response = call_live(request);
      std::lock_guard lock(record_mutex_);
      fixture_.save(request, response, clock_());
      return response;
    }
  }
  throw Error("unreachable backend mode");
}

json BackendClient::call_live(const BackendRequest& request) {
  auto url_it = config_.urls.find(request.endpoint_id);
  if (url_it == config_.urls.end() || url_it->second.empty()) {
    throw InvalidArgument("no URL configured for endpoint '" + request.endpoint_id + "'");
  }
  HeaderList headers{{"Content-Type", "application/json"}};
  if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  const std::string body = request.payload.dump();

  auto backoff = retry_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    limiter_for(request.endpoint_id).acquire();
    int status = 0;
    std::string failure;
    try {
      HttpResponse res = transport_->post(url_it->second, body, headers);
      status = res.status;
      if (res.status >= 200 && res.status < 300) {
        try {
          return json::parse(res.body);
        } catch (const json::exception& e) {
          throw ProtocolError(request.endpoint_id + " returned a non-JSON body: " + e.what());
        }
      }
      // Client errors other than 429 carry a meaningful body; let the typed
      // client decide what the rejection means.
      if (res.status >= 400 && res.status < 500 && res.status != 429) {
        try {
          json parsed = json::parse(res.body);
          if (parsed.is_object()) parsed["http_status"] = res.status;
          return parsed;
        } catch (const json::exception&) {
          throw TransportError(request.endpoint_id + " rejected the request with HTTP " +
                                   std::to_string(res.status),
                               res.status, attempt);
        }
      }
      failure = "HTTP " + std::to_string(res.status);
    } catch (const TransportError& e) {
      status = e.status();
      failure = e.what();
    }
    const bool retryable = status == 0 || status == 429 || status >= 500;
    if (!retryable || attempt >= retry_.attempts) {
      throw TransportError(request.endpoint_id + " failed after " + std::to_string(attempt) +
                               " attempt(s): " + failure,
                           status, attempt);
    }
    retry_.sleep(backoff);
    backoff *= 2;
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> CompletionClient::complete(std::string_view prompt,
                                                    const GenerationParams& params) {
  if (prompt.empty()) throw InvalidArgument("completion prompt must be non-empty");
  params.validate();
  BackendRequest req{RequestKind::Complete, endpoint_id_,
                     json{{"prompt", prompt},
                          {"temperature", params.temperature},
                          {"top_p", params.top_p},
                          {"max_tokens", params.max_tokens},
                          {"n", params.sample_count},
                          {"stop", params.stop_sequences}}};
  json res = client_.call(req);
  if (!res.is_object() || !res.contains("choices") || !res["choices"].is_array()) {
    throw ProtocolError("completion response lacks a choices array");
  }
  const auto& choices = res["choices"];
  if (choices.size() != static_cast<std::size_t>(params.sample_count)) {
    throw ProtocolError("completion returned " + std::to_string(choices.size()) +
                        " choices, expected " + std::to_string(params.sample_count));
  }
  std::vector<std::string> out;
  out.reserve(choices.size());
  for (const auto& c : choices) {
    if (!c.is_object() || !c.contains("text") || !c["text"].is_string()) {
      throw ProtocolError("completion choice lacks a text field");
    }
    out.push_back(truncate_at_stop(c["text"].get<std::string>(), params.stop_sequences));
  }
  return out;
}

// ---------------------------------------------------------------------------

Matrix EmbeddingClient::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw InvalidArgument("embed needs at least one text");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].size() > kMaxEmbedTextBytes) {
      throw InvalidArgument("text " + std::to_string(i) + " exceeds the embedding length cap");
    }
  }
  BackendRequest req{RequestKind::Embed, endpoint_id_, json{{"input", texts}}};
  json res = client_.call(req);
  if (!res.is_object() || !res.contains("data") || !res["data"].is_array()) {
    throw ProtocolError("embedding response lacks a data array");
  }
  const auto& data = res["data"];
  if (data.size() != texts.size()) {
    throw ProtocolError("embedding response has " + std::to_string(data.size()) +
                        " rows for " + std::to_string(texts.size()) + " inputs");
  }
  std::optional<Eigen::Index> width = width_;
  for (const auto& row : data) {
    if (!row.contains("embedding") || !row["embedding"].is_array()) {
      throw ProtocolError("embedding row lacks an embedding array");
    }
    auto w = static_cast<Eigen::Index>(row["embedding"].size());
    if (w == 0) throw ProtocolError("empty embedding row");
    if (width && *width != w) {
      throw ProtocolError("ragged embedding response: width " + std::to_string(w) +
                          " differs from " + std::to_string(*width));
    }
    width = w;
  }
  Matrix out(static_cast<Eigen::Index>(data.size()), *width);
  for (std::size_t i = 0; i < data.size(); ++i) {
    // Rows may carry an explicit index; honour it so row order matches input order.
    std::size_t target = data[i].value("index", i);
    if (target >= data.size()) throw ProtocolError("embedding row index out of range");
    const auto& vec = data[i]["embedding"];
    for (Eigen::Index c = 0; c < *width; ++c) {
      if (!vec[static_cast<std::size_t>(c)].is_number()) {
        throw ProtocolError("non-numeric embedding component");
      }
      out(static_cast<Eigen::Index>(target), c) = vec[static_cast<std::size_t>(c)].get<double>();
    }
  }
  width_ = width;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_window(Date start_day, Date end_day) {
  if (start_day > end_day) {
    throw InvalidArgument("window start " + format_date(start_day) + " is after end " +
                          format_date(end_day));
  }
}

// Builds a dense series over the window from sparse (day, count) samples;
// days the backend omits count as zero.
CountSeries densify(const std::string& keyword, Date start_day, Date end_day,
                    const std::vector<std::pair<Date, std::int64_t>>& samples) {
  std::map<Date, std::int64_t> by_day;
  for (const auto& [day, count] : samples) {
    if (day < start_day || day > end_day) {
      throw ProtocolError("counts for '" + keyword + "' include out-of-window day " +
                          format_date(day));
    }
    if (!by_day.emplace(day, count).second) {
      throw ProtocolError("counts for '" + keyword + "' repeat day " + format_date(day));
    }
  }
  CountSeries s{keyword, start_day, end_day, {}, 0};
  for (Date d : days_between(start_day, end_day)) {
    auto it = by_day.find(d);
    std::int64_t c = it == by_day.end() ? 0 : it->second;
    s.daily.emplace_back(d, c);
    s.total += c;
  }
  s.validate();
  return s;
}

}  // namespace

CountSeries PostCountSource::counts(const std::string& keyword, Date start_day, Date end_day) {
  check_window(start_day, end_day);
  BackendRequest req{RequestKind::Counts, endpoint_id_,
                     json{{"query", keyword},
                          {"start_time", format_iso8601(Timestamp{start_day})},
                          {"end_time", format_iso8601(Timestamp{end_day + std::chrono::days{1}})},
                          {"granularity", "day"}}};
  json res = client_.call(req);
  if (res.contains("errors")) {
    throw WindowError("counts backend rejected the window for '" + keyword + "': " +
                      res["errors"].dump());
  }
  if (!res.contains("data") || !res["data"].is_array()) {
    throw ProtocolError("counts response lacks a data array");
  }
  std::vector<std::pair<Date, std::int64_t>> samples;
  for (const auto& e : res["data"]) {
    auto start = e.contains("start") && e["start"].is_string()
                     ? try_parse_iso8601(e["start"].get<std::string>())
                     : std::nullopt;
    if (!start || !e.contains("tweet_count") || !e["tweet_count"].is_number_integer()) {
      throw ProtocolError("malformed counts bucket: " + e.dump());
    }
    samples.emplace_back(day_of(*start), e["tweet_count"].get<std::int64_t>());
  }
  CountSeries s = densify(keyword, start_day, end_day, samples);
  if (res.contains("meta") && res["meta"].contains("total_tweet_count")) {
    auto stated = res["meta"]["total_tweet_count"].get<std::int64_t>();
    if (stated != s.total) {
      throw ProtocolError("counts total " + std::to_string(stated) + " for '" + keyword +
                          "' disagrees with the daily sum " + std::to_string(s.total));
    }
  }
  return s;
}

CountSeries PageViewCountSource::counts(const std::string& keyword, Date start_day,
                                        Date end_day) {
  check_window(start_day, end_day);
  auto compact = [](Date d) {
    std::string s = format_date(d);
    s.erase(std::remove(s.begin(), s.end(), '-'), s.end());
    return s;
  };
  std::string article = keyword;
  std::replace(article.begin(), article.end(), ' ', '_');
  BackendRequest req{RequestKind::Counts, endpoint_id_,
                     json{{"article", article},
                          {"start", compact(start_day)},
                          {"end", compact(end_day)},
                          {"granularity", "daily"}}};
  json res = client_.call(req);
  if (!res.contains("items")) {
    if (res.contains("title") || res.contains("detail")) {
      throw WindowError("page-view backend rejected the window for '" + keyword +
                        "': " + res.value("detail", res.value("title", std::string{})));
    }
    throw ProtocolError("page-view response lacks an items array");
  }
  std::vector<std::pair<Date, std::int64_t>> samples;
  for (const auto& e : res["items"]) {
    if (!e.contains("timestamp") || !e["timestamp"].is_string() || !e.contains("views")) {
      throw ProtocolError("malformed page-view item: " + e.dump());
    }
    std::string ts = e["timestamp"].get<std::string>();
    if (ts.size() < 8) throw ProtocolError("malformed page-view timestamp " + ts);
    auto day = try_parse_date(ts.substr(0, 4) + "-" + ts.substr(4, 2) + "-" + ts.substr(6, 2));
    if (!day) throw ProtocolError("malformed page-view timestamp " + ts);
    samples.emplace_back(*day, e["views"].get<std::int64_t>());
  }
  return densify(keyword, start_day, end_day, samples);
}

// ---------------------------------------------------------------------------

std::vector<Post> SearchClient::search(const std::string& query, Date day,
                                       const CollectFilter& filter, int limit) {
  if (limit < 1) throw InvalidArgument("search limit must be >= 1");
  if (query.empty()) throw InvalidArgument("search query must be non-empty");
  filter.validate();

  constexpr int kMaxPages = 1000;
  std::vector<Post> matched;
  std::set<std::string> seen_tokens;
  std::optional<std::string> token;
  for (int page = 0; page < kMaxPages; ++page) {
    json payload{{"query", query},
                 {"start_time", format_iso8601(Timestamp{day})},
                 {"end_time", format_iso8601(Timestamp{day + std::chrono::days{1}})},
                 {"max_results", limit},
                 {"filter", filter}};
    if (token) payload["pagination_token"] = *token;
    json res = client_.call(BackendRequest{RequestKind::Search, endpoint_id_, payload});
    if (res.contains("errors")) {
      throw ProtocolError("search backend error for '" + query + "': " + res["errors"].dump());
    }
    if (res.contains("data")) {
      if (!res["data"].is_array()) throw ProtocolError("search data is not an array");
      for (const auto& item : res["data"]) {
        Post p = post_from_wire(item);
        p.keyword = query;
        if (day_of(p.created_at) == day && filter.matches(p)) matched.push_back(std::move(p));
      }
    }
    if (!res.contains("meta") || !res["meta"].contains("next_token") ||
        res["meta"]["next_token"].is_null()) {
      break;
    }
    const auto& next = res["meta"]["next_token"];
    if (!next.is_string() || next.get<std::string>().empty()) {
      throw ProtocolError("invalid pagination token in search response");
    }
    if (!seen_tokens.insert(next.get<std::string>()).second) {
      throw ProtocolError("search pagination token repeated: " + next.get<std::string>());
    }
    if (matched.size() >= static_cast<std::size_t>(limit)) break;
    token = next.get<std::string>();
  }
  std::sort(matched.begin(), matched.end(),
            [](const Post& a, const Post& b) { return post_id_less(a.post_id, b.post_id); });
  matched.erase(std::unique(matched.begin(), matched.end(),
                            [](const Post& a, const Post& b) { return a.post_id == b.post_id; }),
                matched.end());
  if (matched.size() > static_cast<std::size_t>(limit)) matched.resize(limit);
  return matched;
}

}  // namespace popscope
