#include "popscope/app.hpp"

#include <fstream>
#include <set>

#include "popscope/collector.hpp"
#include "popscope/corpus.hpp"
#include "popscope/error.hpp"
#include "popscope/keywords.hpp"
#include "popscope/probe.hpp"
#include "popscope/projection.hpp"

namespace popscope {

using nlohmann::json;

Timestamp system_now() {
  return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

// -- config -------------------------------------------------------------------

void AppConfig::validate() const {
  if (ui_port < 1024 || ui_port > 65535) {
    throw InvalidArgument("ui_port must be in [1024, 65535], got " + std::to_string(ui_port));
  }
  if (!(backend.rate_limit_rps > 0)) throw InvalidArgument("rate_limit_rps must be positive");
  if (store_path.empty()) throw InvalidArgument("store_path must be set");
}

void AppConfig::merge_file(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
  static const std::set<std::string> known{"store_path", "fixture_dir",    "mode",      "urls",
                                           "rate_limit_rps", "ui_port", "bind_host", "static_dir"};
  for (const auto& [key, _] : j.items()) {
    if (key == "api_key") {
      throw InvalidArgument("config: api_key is read from POPSCOPE_API_KEY only");
    }
    if (!known.count(key)) throw InvalidArgument("config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("store_path")) store_path = j.at("store_path").get<std::string>();
    if (j.contains("fixture_dir")) backend.fixture_dir = j.at("fixture_dir").get<std::string>();
    if (j.contains("mode")) backend.mode = parse_backend_mode(j.at("mode").get<std::string>());
    if (j.contains("urls")) {
      for (const auto& [id, url] : j.at("urls").items()) backend.urls[id] = url.get<std::string>();
    }
    if (j.contains("rate_limit_rps")) backend.rate_limit_rps = j.at("rate_limit_rps").get<double>();
    if (j.contains("ui_port")) ui_port = j.at("ui_port").get<int>();
    if (j.contains("bind_host")) bind_host = j.at("bind_host").get<std::string>();
    if (j.contains("static_dir")) static_dir = j.at("static_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

AppConfig AppConfig::load(const std::optional<std::filesystem::path>& config_file) {
  AppConfig cfg;
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw NotFound("config file " + config_file->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw InvalidArgument("config file " + config_file->string() + ": " + e.what());
    }
    cfg.merge_file(j);
  }
  cfg.backend = BackendConfig::from_env(cfg.backend);
  return cfg;
}

// -- request helpers ----------------------------------------------------------

namespace {

const json& field(const json& req, const char* key) {
  if (!req.is_object() || !req.contains(key) || req.at(key).is_null()) {
    throw InvalidArgument(std::string("missing field '") + key + "'");
  }
  return req.at(key);
}

template <typename T>
T get(const json& req, const char* key) {
  try {
    return field(req, key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& req, const char* key, T fallback) {
  if (!req.is_object() || !req.contains(key) || req.at(key).is_null()) return fallback;
  return get<T>(req, key);
}

Date get_date(const json& req, const char* key) {
  const auto text = get<std::string>(req, key);
  auto d = try_parse_date(text);
  if (!d) throw InvalidArgument(std::string("field '") + key + "' must be YYYY-MM-DD");
  return *d;
}

std::vector<KeywordCandidate> candidates_from(const json& req) {
  std::vector<KeywordCandidate> out;
  if (req.contains("candidates")) {
    try {
      out = req.at("candidates").get<std::vector<KeywordCandidate>>();
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("field 'candidates': ") + e.what());
    }
  } else {
    int ordinal = 1;
    for (const auto& k : get<std::vector<std::string>>(req, "keywords")) {
      out.push_back({k, ordinal++, ""});
    }
  }
  if (out.empty()) throw InvalidArgument("at least one candidate is required");
  return out;
}

std::unique_ptr<CountSource> count_source(BackendClient& client, std::string_view name) {
  if (name == "posts") return std::make_unique<PostCountSource>(client);
  if (name == "pageviews") return std::make_unique<PageViewCountSource>(client);
  throw InvalidArgument("source must be posts or pageviews");
}

std::int64_t candidate_count(Store& store, const std::string& run_id) {
  return static_cast<std::int64_t>(store.corpus_candidates(run_id, {}).size());
}

}  // namespace

// -- App ----------------------------------------------------------------------

App::App(AppConfig config, std::shared_ptr<Transport> transport, Clock clock)
    : config_((config.validate(), std::move(config))),
      clock_(std::move(clock)),
      store_(Store::open(config_.store_path)),
      backend_(std::make_unique<BackendClient>(config_.backend, std::move(transport))) {
  backend_->set_clock(clock_);
}

json App::health() const {
  return {{"status", "ok"}, {"version", kVersion}, {"mode", to_string(config_.backend.mode)}};
}

json App::suggest(const json& req) {
  const auto topic = get<std::string>(req, "topic");
  const int samples = get_or<int>(req, "samples", 1);
  if (samples < 1) throw InvalidArgument("samples must be positive");
  GenerationParams params = get_or<GenerationParams>(req, "params", {});
  CompletionClient completion(*backend_);
  auto parsed = suggest_keywords(completion, topic, samples, params);
  store_.save_trend_reports([&] {
    std::vector<TrendReport> r;
    for (const auto& c : parsed.candidates) r.push_back({c, std::nullopt, std::nullopt});
    return r;
  }(), "suggest");
  return {{"prompt", build_prompt(topic)},
          {"candidates", parsed.candidates},
          {"warnings", parsed.warnings}};
}

json App::validate(const json& req) {
  auto candidates = candidates_from(req);
  Date start{}, end{};
  if (req.contains("start") || req.contains("end")) {
    start = get_date(req, "start");
    end = get_date(req, "end");
  } else {
    std::tie(start, end) = default_validation_window(day_of(clock_()));
  }
  const auto source_name = get_or<std::string>(req, "source", "posts");
  auto source = count_source(*backend_, source_name);
  auto reports = validate_keywords(candidates, start, end, *source);
  store_.save_trend_reports(reports, source_name);
  return {{"start", format_date(start)},
          {"end", format_date(end)},
          {"source", source_name},
          {"reports", reports}};
}

json App::context(const json& req) {
  KeywordCandidate c{get<std::string>(req, "keyword"), 1, ""};
  const auto base = get_or<std::string>(req, "base_url", std::string(kDefaultSearchUrl));
  json urls = json::array();
  for (const auto& [day, url] : context_urls(c, get_date(req, "start"), get_date(req, "end"), base)) {
    urls.push_back({{"day", format_date(day)}, {"url", url}});
  }
  return {{"keyword", c.surface}, {"urls", urls}};
}

json App::collect(const json& req) {
  CollectionJob job;
  job.keywords = get<std::vector<std::string>>(req, "keywords");
  job.start_day = get_date(req, "start");
  job.end_day = get_date(req, "end");
  job.policy.mode = parse_sampling_mode(get_or<std::string>(req, "mode", "uniform"));
  job.policy.per_day_cap = get<std::int64_t>(req, "day_cap");
  job.policy.overall_cap_per_keyword = get<std::int64_t>(req, "keyword_cap");
  if (auto lang = get_or<std::string>(req, "lang", ""); !lang.empty()) job.filter.language = lang;
  if (auto loc = get_or<std::string>(req, "location", ""); !loc.empty()) {
    parse_location_filter(loc, job.filter);
  }
  job.filter.exclude_reposts = get_or<bool>(req, "no_reposts", false);
  job.seed = get_or<std::uint64_t>(req, "seed", 0);
  PostCountSource counts(*backend_);
  SearchClient search(*backend_);
  return run_collection(store_, counts, search, job);
}

json App::embed(const json& req) {
  const auto tag = get_or<std::string>(req, "model_tag", std::string(kDefaultModelTag));
  const int batch = get_or<int>(req, "batch_size", kEmbedBatchSize);
  if (batch < 1) throw InvalidArgument("batch_size must be positive");
  EmbeddingClient client(*backend_);
  const auto missing = store_.posts_missing_embeddings(tag);
  std::size_t done = 0;
  for (std::size_t i = 0; i < missing.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(missing.size(), i + static_cast<std::size_t>(batch));
    std::vector<std::string> ids(missing.begin() + static_cast<std::ptrdiff_t>(i),
                                 missing.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<std::string> texts;
    for (const auto& id : ids) texts.push_back(store_.post(id)->text);
    store_.put_embeddings(tag, ids, client.embed(texts));
    done += ids.size();
  }
  return {{"model_tag", tag},
          {"embedded", done},
          {"total", store_.embeddings(tag).first.size()}};
}

json App::project(const json& req) {
  const auto run_id = get<std::string>(req, "run_id");
  const auto tag = get_or<std::string>(req, "model_tag", std::string(kDefaultModelTag));
  const int pca_k = get_or<int>(req, "pca_k", kDefaultPcaK);
  TsneParams tsne = get_or<TsneParams>(req, "tsne", {});
  return run_projection(store_, run_id, tag, pca_k, tsne, clock_());
}

json App::points(const std::string& run_id) {
  auto rows = store_.cluster_rows(run_id);
  json pts = json::array();
  std::int64_t candidates = 0;
  for (const auto& r : rows) {
    auto p = store_.post(r.post_id);
    pts.push_back({{"post_id", r.post_id},
                   {"x", r.x},
                   {"y", r.y},
                   {"label", r.cluster_label ? json(*r.cluster_label) : json(nullptr)},
                   {"excluded", r.excluded},
                   {"text", p ? p->text : std::string()}});
    if (!r.excluded) ++candidates;
  }
  return {{"run_id", run_id}, {"points", pts}, {"candidate_count", candidates}};
}

json App::cluster(const json& req) {
  const auto run_id = get<std::string>(req, "run_id");
  DbscanParams params{get<double>(req, "eps"), get<int>(req, "min_pts")};
  auto a = recluster(store_, run_id, params);
  std::map<int, std::int64_t> sizes;
  for (int l : a.labels) ++sizes[l];
  json size_obj = json::object();
  for (const auto& [l, n] : sizes) size_obj[std::to_string(l)] = n;
  return {{"run_id", run_id},
          {"eps", params.eps},
          {"min_pts", params.min_pts},
          {"labels", a.labels},
          {"n_clusters", a.n_clusters},
          {"sizes", size_obj}};
}

json App::exclude(const json& req) {
  const auto run_id = get<std::string>(req, "run_id");
  const auto labels = get<std::vector<int>>(req, "labels");
  const bool flag = get_or<bool>(req, "excluded", true);
  const auto touched = set_excluded(store_, run_id, labels, flag);
  return {{"run_id", run_id},
          {"labels", labels},
          {"excluded", flag},
          {"rows_updated", touched},
          {"candidate_count", candidate_count(store_, run_id)}};
}

json App::corpus_build(const json& req) {
  CorpusSpec spec;
  spec.run_id = get<std::string>(req, "run_id");
  spec.output_dir = get<std::string>(req, "output_dir");
  spec.seed = get_or<std::uint64_t>(req, "seed", 0);
  spec.train_fraction = get_or<double>(req, "train_fraction", 0.8);
  spec.include_location = get_or<bool>(req, "include_location", true);
  spec.include_noise = get_or<bool>(req, "include_noise", true);
  auto result = build_corpus(store_, spec, clock_());
  json out = result.manifest;
  out["train_path"] = result.train_path.string();
  out["test_path"] = result.test_path.string();
  out["manifest_path"] = result.manifest_path.string();
  return out;
}

json App::probe_run(const json& req) {
  ProbeSpec spec;
  try {
    spec = req.get<ProbeSpec>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("probe request: ") + e.what());
  }
  CompletionClient completion(*backend_);
  return run_probes(store_, completion, spec, clock_());
}

json App::probe_report(const std::string& probe_run_id, double threshold_pct) {
  json report = sanity_check(store_, probe_run_id, threshold_pct);
  return report;
}

// -- jobs ---------------------------------------------------------------------

json error_body(const std::exception& e) {
  std::string kind = "Error";
  if (dynamic_cast<const InvalidArgument*>(&e)) kind = "InvalidArgument";
  else if (dynamic_cast<const NotFound*>(&e)) kind = "NotFound";
  else if (dynamic_cast<const MigrationError*>(&e)) kind = "MigrationError";
  else if (dynamic_cast<const StorageError*>(&e)) kind = "StorageError";
  else if (dynamic_cast<const TransportError*>(&e)) kind = "TransportError";
  else if (dynamic_cast<const ProtocolError*>(&e)) kind = "ProtocolError";
  else if (dynamic_cast<const FixtureMiss*>(&e)) kind = "FixtureMiss";
  else if (dynamic_cast<const WindowError*>(&e)) kind = "WindowError";
  else if (dynamic_cast<const PlanError*>(&e)) kind = "PlanError";
  else if (dynamic_cast<const NumericError*>(&e)) kind = "NumericError";
  else if (dynamic_cast<const InsufficientData*>(&e)) kind = "InsufficientData";
  else if (dynamic_cast<const MetaParseError*>(&e)) kind = "MetaParseError";
  else if (!dynamic_cast<const Error*>(&e)) kind = "InternalError";
  return {{"kind", kind}, {"message", e.what()}};
}

namespace {
std::string_view status_name(JobQueue::Status s) {
  switch (s) {
    case JobQueue::Status::Queued: return "queued";
    case JobQueue::Status::Running: return "running";
    case JobQueue::Status::Succeeded: return "succeeded";
    case JobQueue::Status::Failed: return "failed";
  }
  return "unknown";
}
}  // namespace

JobQueue::JobQueue() : worker_([this] { run(); }) {}

JobQueue::~JobQueue() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

std::string JobQueue::submit(std::string kind, std::function<json()> work) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "job-" + std::to_string(next_id_++);
    Job job;
    job.id = id;
    job.kind = std::move(kind);
    job.work = std::move(work);
    jobs_.emplace(id, std::move(job));
    pending_.push_back(id);
  }
  cv_.notify_all();
  return id;
}

json JobQueue::describe(const Job& job) {
  json j{{"id", job.id}, {"kind", job.kind}, {"status", status_name(job.status)}};
  if (job.status == Status::Succeeded) j["result"] = job.result;
  if (job.status == Status::Failed) j["error"] = job.error;
  return j;
}

std::optional<json> JobQueue::status(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return describe(it->second);
}

json JobQueue::wait(const std::string& id) {
  std::unique_lock lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFound("job '" + id + "'");
  cv_.wait(lock, [&] {
    return it->second.status == Status::Succeeded || it->second.status == Status::Failed;
  });
  return describe(it->second);
}

void JobQueue::run() {
  for (;;) {
    std::function<json()> work;
    std::string id;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
      if (pending_.empty()) return;
      id = pending_.front();
      pending_.pop_front();
      auto& job = jobs_.at(id);
      job.status = Status::Running;
      work = std::move(job.work);
    }
    json result, error;
    bool ok = true;
    try {
      result = work();
    } catch (const std::exception& e) {
      ok = false;
      error = error_body(e);
    }
    {
      std::lock_guard lock(mutex_);
      auto& job = jobs_.at(id);
      job.status = ok ? Status::Succeeded : Status::Failed;
      job.result = std::move(result);
      job.error = std::move(error);
    }
    cv_.notify_all();
  }
}

}  // namespace popscope
