#include "popscope/store.hpp"

#include <fcntl.h>
#include <sqlite3.h>
#include <sys/file.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "popscope/digest.hpp"
#include "popscope/error.hpp"

namespace popscope {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "embedding blobs are packed little-endian float32");

// Creation order is also the import order (parents before children).
const std::vector<std::pair<std::string, std::string>>& schema() {
  static const std::vector<std::pair<std::string, std::string>> ddl = {
      {"meta", "CREATE TABLE meta (version INTEGER NOT NULL)"},
      {"keywords",
       "CREATE TABLE keywords ("
       " keyword TEXT PRIMARY KEY CHECK (length(keyword) > 0),"
       " ordinal INTEGER NOT NULL,"
       " source_prompt TEXT NOT NULL,"
       " count_source TEXT NOT NULL,"
       " start_day TEXT NOT NULL,"
       " end_day TEXT NOT NULL,"
       " total INTEGER,"
       " daily TEXT,"
       " error TEXT)"},
      {"users",
       "CREATE TABLE users ("
       " author_id TEXT PRIMARY KEY CHECK (length(author_id) > 0),"
       " handle TEXT NOT NULL,"
       " display_name TEXT NOT NULL,"
       " followers INTEGER NOT NULL,"
       " fetched_at INTEGER NOT NULL)"},
      {"posts",
       "CREATE TABLE posts ("
       " post_id TEXT PRIMARY KEY CHECK (length(post_id) > 0),"
       " text TEXT NOT NULL,"
       " created_at INTEGER NOT NULL,"
       " author_id TEXT NOT NULL,"
       " lang TEXT NOT NULL,"
       " geo_region TEXT,"
       " geo_country TEXT,"
       " geo_lat REAL,"
       " geo_lon REAL,"
       " is_repost INTEGER NOT NULL,"
       " keyword TEXT NOT NULL)"},
      {"embeddings",
       "CREATE TABLE embeddings ("
       " post_id TEXT NOT NULL REFERENCES posts(post_id),"
       " model_tag TEXT NOT NULL,"
       " dim INTEGER NOT NULL CHECK (dim > 0),"
       " vector BLOB NOT NULL CHECK (length(vector) = 4 * dim),"
       " PRIMARY KEY (post_id, model_tag))"},
      {"projection_runs",
       "CREATE TABLE projection_runs ("
       " run_id TEXT PRIMARY KEY CHECK (length(run_id) > 0),"
       " model_tag TEXT NOT NULL,"
       " pca_k INTEGER NOT NULL,"
       " pca_k_used INTEGER NOT NULL,"
       " tsne_params TEXT NOT NULL,"
       " created_at INTEGER NOT NULL,"
       " dbscan_eps REAL,"
       " dbscan_min_pts INTEGER,"
       " n_clusters INTEGER)"},
      {"cluster_rows",
       "CREATE TABLE cluster_rows ("
       " post_id TEXT NOT NULL REFERENCES posts(post_id),"
       " run_id TEXT NOT NULL REFERENCES projection_runs(run_id) ON DELETE CASCADE,"
       " x REAL NOT NULL,"
       " y REAL NOT NULL,"
       " cluster_label INTEGER,"
       " excluded INTEGER NOT NULL DEFAULT 0,"
       " PRIMARY KEY (post_id, run_id))"},
      {"corpus_exports",
       "CREATE TABLE corpus_exports ("
       " export_id INTEGER PRIMARY KEY AUTOINCREMENT,"
       " run_id TEXT NOT NULL REFERENCES projection_runs(run_id) ON DELETE CASCADE,"
       " output_dir TEXT NOT NULL,"
       " spec_hash TEXT NOT NULL,"
       " manifest TEXT NOT NULL,"
       " created_at INTEGER NOT NULL)"},
      {"probe_runs",
       "CREATE TABLE probe_runs ("
       " probe_run_id TEXT PRIMARY KEY CHECK (length(probe_run_id) > 0),"
       " spec TEXT NOT NULL,"
       " created_at INTEGER NOT NULL,"
       " report TEXT)"},
      {"probe_rows",
       "CREATE TABLE probe_rows ("
       " row_id INTEGER PRIMARY KEY AUTOINCREMENT,"
       " probe_run_id TEXT NOT NULL REFERENCES probe_runs(probe_run_id),"
       " probe_text TEXT NOT NULL,"
       " generated_text TEXT NOT NULL,"
       " parsed_ok INTEGER NOT NULL,"
       " prob_tag TEXT,"
       " created_at INTEGER NOT NULL,"
       " CHECK ((parsed_ok = 1) = (prob_tag IS NOT NULL)))"},
  };
  return ddl;
}

struct DbCloser {
  void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
};
struct StmtFinalizer {
  void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
};

[[noreturn]] void fail(sqlite3* db, const std::string& what) {
  int code = sqlite3_extended_errcode(db);
  std::string msg = what + ": " + sqlite3_errmsg(db);
  if ((code & 0xff) == SQLITE_CONSTRAINT) throw StorageError("constraint violation in " + msg);
  throw StorageError(msg);
}

class Statement {
 public:
  Statement(sqlite3* db, const std::string& sql) : db_(db) {
    sqlite3_stmt* raw = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &raw, nullptr) != SQLITE_OK) {
      fail(db, "prepare '" + sql + "'");
    }
    stmt_.reset(raw);
  }

  Statement& bind(int i, std::nullopt_t) {
    check(sqlite3_bind_null(stmt_.get(), i));
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_.get(), i, v));
    return *this;
  }
  Statement& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
  Statement& bind(int i, bool v) { return bind(i, static_cast<std::int64_t>(v ? 1 : 0)); }
  Statement& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_.get(), i, v));
    return *this;
  }
  Statement& bind(int i, std::string_view v) {
    check(sqlite3_bind_text(stmt_.get(), i, v.data(), static_cast<int>(v.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int i, const std::string& v) { return bind(i, std::string_view(v)); }
  Statement& bind(int i, const char* v) { return bind(i, std::string_view(v)); }
  Statement& bind_blob(int i, const void* data, std::size_t n) {
    check(sqlite3_bind_blob(stmt_.get(), i, data, static_cast<int>(n), SQLITE_TRANSIENT));
    return *this;
  }
  template <typename T>
  Statement& bind(int i, const std::optional<T>& v) {
    if (!v) return bind(i, std::nullopt);
    return bind(i, *v);
  }

  /// True while a row is available.
  bool step() {
    int rc = sqlite3_step(stmt_.get());
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail(db_, "step");
  }
  void run() {
    while (step()) {
    }
  }
  void reset() {
    sqlite3_reset(stmt_.get());
    sqlite3_clear_bindings(stmt_.get());
  }

  bool is_null(int c) const { return sqlite3_column_type(stmt_.get(), c) == SQLITE_NULL; }
  std::int64_t i64(int c) const { return sqlite3_column_int64(stmt_.get(), c); }
  double f64(int c) const { return sqlite3_column_double(stmt_.get(), c); }
  std::string text(int c) const {
    auto p = sqlite3_column_text(stmt_.get(), c);
    return p ? std::string(reinterpret_cast<const char*>(p),
                           static_cast<std::size_t>(sqlite3_column_bytes(stmt_.get(), c)))
             : std::string();
  }
  std::string blob(int c) const {
    auto p = sqlite3_column_blob(stmt_.get(), c);
    auto n = static_cast<std::size_t>(sqlite3_column_bytes(stmt_.get(), c));
    return p ? std::string(static_cast<const char*>(p), n) : std::string();
  }
  std::optional<std::string> opt_text(int c) const {
    return is_null(c) ? std::nullopt : std::optional(text(c));
  }
  std::optional<double> opt_f64(int c) const {
    return is_null(c) ? std::nullopt : std::optional(f64(c));
  }
  std::optional<std::int64_t> opt_i64(int c) const {
    return is_null(c) ? std::nullopt : std::optional(i64(c));
  }
  int column_count() const { return sqlite3_column_count(stmt_.get()); }
  int column_type(int c) const { return sqlite3_column_type(stmt_.get(), c); }
  std::string column_name(int c) const { return sqlite3_column_name(stmt_.get(), c); }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) fail(db_, "bind");
  }
  sqlite3* db_;
  std::unique_ptr<sqlite3_stmt, StmtFinalizer> stmt_;
};

void exec_sql(sqlite3* db, const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    int code = sqlite3_extended_errcode(db);
    if ((code & 0xff) == SQLITE_CONSTRAINT) {
      throw StorageError("constraint violation in '" + sql + "': " + msg);
    }
    throw StorageError("'" + sql + "' failed: " + msg);
  }
}

// Rolls back unless commit() was reached.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec_sql(db_, "BEGIN IMMEDIATE"); }
  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;
  void commit() {
    exec_sql(db_, "COMMIT");
    done_ = true;
  }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

std::int64_t to_epoch(Timestamp ts) { return ts.time_since_epoch().count(); }
Timestamp from_epoch(std::int64_t s) { return Timestamp{std::chrono::seconds{s}}; }

constexpr const char* kPostColumns =
    "p.post_id, p.text, p.created_at, p.author_id, p.lang, p.geo_region, p.geo_country, "
    "p.geo_lat, p.geo_lon, p.is_repost, p.keyword";
constexpr const char* kPostIdOrder = "length(p.post_id), p.post_id";

Post read_post(const Statement& s) {
  Post p;
  p.post_id = s.text(0);
  p.text = s.text(1);
  p.created_at = from_epoch(s.i64(2));
  p.author_id = s.text(3);
  p.lang = s.text(4);
  p.geo.region = s.opt_text(5);
  p.geo.country_code = s.opt_text(6);
  p.geo.lat = s.opt_f64(7);
  p.geo.lon = s.opt_f64(8);
  p.is_repost = s.i64(9) != 0;
  p.keyword = s.text(10);
  return p;
}

class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StorageError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw StorageError("store locked by another process (" + path.string() + ")");
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  int fd_ = -1;
};

}  // namespace

struct Store::Impl {
  std::unique_ptr<FileLock> lock;
  std::unique_ptr<sqlite3, DbCloser> db;
  std::mutex mutex;

  sqlite3* raw() { return db.get(); }

  void exec(const std::string& sql) { exec_sql(raw(), sql); }

  bool has_run(const std::string& run_id) {
    Statement s(raw(), "SELECT 1 FROM projection_runs WHERE run_id = ?");
    s.bind(1, run_id);
    return s.step();
  }

  void require_run(const std::string& run_id) {
    if (!has_run(run_id)) throw NotFound("unknown projection run '" + run_id + "'");
  }

  std::int64_t count(const std::string& table) {
    Statement s(raw(), "SELECT count(*) FROM " + table);
    s.step();
    return s.i64(0);
  }
};


Store::Store(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;
Store::~Store() = default;

const std::vector<std::string>& Store::table_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, ddl] : schema()) out.push_back(name);
    return out;
  }();
  return names;
}

Store Store::open(const std::filesystem::path& path) {
  auto impl = std::make_unique<Impl>();
  const bool in_memory = path == ":memory:";
  if (!in_memory) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto lock_path = path;
    lock_path += ".lock";
    impl->lock = std::make_unique<FileLock>(lock_path);
  }
  sqlite3* raw = nullptr;
  int rc = sqlite3_open_v2(path.c_str(), &raw,
                           SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                           nullptr);
  impl->db.reset(raw);
  if (rc != SQLITE_OK) {
    throw StorageError("cannot open store " + path.string() + ": " +
                       (raw ? sqlite3_errmsg(raw) : "out of memory"));
  }
  sqlite3_busy_timeout(raw, 5000);
  impl->exec("PRAGMA foreign_keys = ON");

  Statement probe(raw, "SELECT count(*) FROM sqlite_master WHERE type='table' AND name='meta'");
  probe.step();
  if (probe.i64(0) == 0) {
    Transaction tx(impl->raw());
    for (const auto& [name, ddl] : schema()) impl->exec(ddl);
    impl->exec("INSERT INTO meta(version) VALUES (" + std::to_string(kSchemaVersion) + ")");
    tx.commit();
  } else {
    Statement v(raw, "SELECT version FROM meta");
    if (!v.step()) throw MigrationError("store has no schema version");
    auto version = v.i64(0);
    if (version > kSchemaVersion) {
      throw MigrationError("store schema version " + std::to_string(version) +
                           " is newer than supported version " + std::to_string(kSchemaVersion));
    }
    // Version 1 is the first schema; forward migrations would run here.
  }
  return Store(std::move(impl));
}

// ---------------------------------------------------------------------------

void Store::save_trend_reports(const std::vector<TrendReport>& reports, std::string_view source) {
  std::lock_guard lock(impl_->mutex);
  Transaction tx(impl_->raw());
  Statement s(impl_->raw(),
              "INSERT OR REPLACE INTO keywords (keyword, ordinal, source_prompt, count_source, "
              "start_day, end_day, total, daily, error) VALUES (?,?,?,?,?,?,?,?,?)");
  for (const auto& r : reports) {
    s.bind(1, r.candidate.surface).bind(2, r.candidate.ordinal).bind(3, r.candidate.source_prompt);
    s.bind(4, source);
    if (r.series) {
      json daily = json(*r.series)["daily"];
      s.bind(5, format_date(r.series->start_day)).bind(6, format_date(r.series->end_day));
      s.bind(7, r.series->total).bind(8, daily.dump());
    } else {
      s.bind(5, "").bind(6, "").bind(7, std::nullopt).bind(8, std::nullopt);
    }
    s.bind(9, r.error);
    s.run();
    s.reset();
  }
  tx.commit();
}

std::vector<TrendReport> Store::trend_reports() {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT keyword, ordinal, source_prompt, start_day, end_day, total, daily, error "
              "FROM keywords ORDER BY total IS NULL, total DESC, ordinal");
  std::vector<TrendReport> out;
  while (s.step()) {
    TrendReport r;
    r.candidate = {s.text(0), static_cast<int>(s.i64(1)), s.text(2)};
    if (!s.is_null(5)) {
      json j{{"keyword", r.candidate.surface},
             {"start_day", s.text(3)},
             {"end_day", s.text(4)},
             {"total", s.i64(5)},
             {"daily", json::parse(s.text(6))}};
      r.series = j.get<CountSeries>();
    }
    r.error = s.opt_text(7);
    out.push_back(std::move(r));
  }
  return out;
}

UpsertResult Store::upsert_posts(const std::vector<Post>& posts) {
  std::lock_guard lock(impl_->mutex);
  Transaction tx(impl_->raw());
  Statement s(impl_->raw(),
              "INSERT OR IGNORE INTO posts (post_id, text, created_at, author_id, lang, geo_region, "
              "geo_country, geo_lat, geo_lon, is_repost, keyword) VALUES (?,?,?,?,?,?,?,?,?,?,?)");
  UpsertResult out;
  for (const auto& p : posts) {
    if (p.post_id.empty()) throw StorageError("constraint violation: empty post_id");
    s.bind(1, p.post_id).bind(2, p.text).bind(3, to_epoch(p.created_at)).bind(4, p.author_id);
    s.bind(5, p.lang).bind(6, p.geo.region).bind(7, p.geo.country_code).bind(8, p.geo.lat);
    s.bind(9, p.geo.lon).bind(10, p.is_repost).bind(11, p.keyword);
    s.run();
    s.reset();
    if (sqlite3_changes(impl_->raw()) > 0) {
      ++out.inserted;
    } else {
      ++out.duplicates;
    }
  }
  tx.commit();
  return out;
}

std::optional<Post> Store::post(const std::string& post_id) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(), std::string("SELECT ") + kPostColumns + " FROM posts p WHERE post_id = ?");
  s.bind(1, post_id);
  if (!s.step()) return std::nullopt;
  return read_post(s);
}

std::vector<Post> Store::posts(const std::optional<std::string>& keyword) {
  std::lock_guard lock(impl_->mutex);
  std::string sql = std::string("SELECT ") + kPostColumns + " FROM posts p";
  if (keyword) sql += " WHERE p.keyword = ?";
  sql += std::string(" ORDER BY ") + kPostIdOrder;
  Statement s(impl_->raw(), sql);
  if (keyword) s.bind(1, *keyword);
  std::vector<Post> out;
  while (s.step()) out.push_back(read_post(s));
  return out;
}

std::int64_t Store::post_count() {
  std::lock_guard lock(impl_->mutex);
  return impl_->count("posts");
}

void Store::upsert_users(const std::vector<StoredUser>& users) {
  std::lock_guard lock(impl_->mutex);
  Transaction tx(impl_->raw());
  Statement s(impl_->raw(),
              "INSERT OR REPLACE INTO users (author_id, handle, display_name, followers, fetched_at) "
              "VALUES (?,?,?,?,?)");
  for (const auto& u : users) {
    s.bind(1, u.author_id).bind(2, u.handle).bind(3, u.display_name).bind(4, u.followers);
    s.bind(5, to_epoch(u.fetched_at));
    s.run();
    s.reset();
  }
  tx.commit();
}

std::optional<StoredUser> Store::user(const std::string& author_id) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT author_id, handle, display_name, followers, fetched_at FROM users "
              "WHERE author_id = ?");
  s.bind(1, author_id);
  if (!s.step()) return std::nullopt;
  return StoredUser{s.text(0), s.text(1), s.text(2), s.i64(3), from_epoch(s.i64(4))};
}

// ---------------------------------------------------------------------------

void Store::put_embeddings(const std::string& model_tag, const std::vector<std::string>& post_ids,
                           const Matrix& vectors) {
  if (static_cast<Eigen::Index>(post_ids.size()) != vectors.rows()) {
    throw InvalidArgument("embedding rows do not match post ids");
  }
  if (vectors.cols() == 0) throw InvalidArgument("embedding width must be positive");
  std::lock_guard lock(impl_->mutex);
  {
    Statement w(impl_->raw(), "SELECT dim FROM embeddings WHERE model_tag = ? LIMIT 1");
    w.bind(1, model_tag);
    if (w.step() && w.i64(0) != vectors.cols()) {
      throw StorageError("model tag '" + model_tag + "' already stores width " +
                         std::to_string(w.i64(0)) + ", not " + std::to_string(vectors.cols()));
    }
  }
  Transaction tx(impl_->raw());
  Statement s(impl_->raw(),
              "INSERT OR REPLACE INTO embeddings (post_id, model_tag, dim, vector) VALUES (?,?,?,?)");
  std::vector<float> packed(static_cast<std::size_t>(vectors.cols()));
  for (std::size_t i = 0; i < post_ids.size(); ++i) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
      packed[static_cast<std::size_t>(c)] =
          static_cast<float>(vectors(static_cast<Eigen::Index>(i), c));
    }
    s.bind(1, post_ids[i]).bind(2, model_tag).bind(3, static_cast<std::int64_t>(vectors.cols()));
    s.bind_blob(4, packed.data(), packed.size() * sizeof(float));
    s.run();
    s.reset();
  }
  tx.commit();
}

std::pair<std::vector<std::string>, Matrix> Store::embeddings(const std::string& model_tag) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT e.post_id, e.dim, e.vector FROM embeddings e JOIN posts p USING (post_id) "
              "WHERE e.model_tag = ? ORDER BY length(e.post_id), e.post_id");
  s.bind(1, model_tag);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> rows;
  std::int64_t dim = 0;
  while (s.step()) {
    ids.push_back(s.text(0));
    dim = s.i64(1);
    std::string blob = s.blob(2);
    std::vector<float> v(static_cast<std::size_t>(dim));
    std::memcpy(v.data(), blob.data(), blob.size());
    rows.push_back(std::move(v));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::int64_t c = 0; c < dim; ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          rows[i][static_cast<std::size_t>(c)];
    }
  }
  return {std::move(ids), std::move(m)};
}

std::vector<std::string> Store::posts_missing_embeddings(const std::string& model_tag) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT p.post_id FROM posts p WHERE NOT EXISTS (SELECT 1 FROM embeddings e "
              "WHERE e.post_id = p.post_id AND e.model_tag = ?) ORDER BY length(p.post_id), "
              "p.post_id");
  s.bind(1, model_tag);
  std::vector<std::string> out;
  while (s.step()) out.push_back(s.text(0));
  return out;
}

// ---------------------------------------------------------------------------

void Store::save_projection(const ProjectionRun& run, const std::vector<ClusterRow>& rows) {
  std::lock_guard lock(impl_->mutex);
  Transaction tx(impl_->raw());
  {
    Statement del(impl_->raw(), "DELETE FROM projection_runs WHERE run_id = ?");
    del.bind(1, run.run_id).run();
  }
  Statement ins(impl_->raw(),
                "INSERT INTO projection_runs (run_id, model_tag, pca_k, pca_k_used, tsne_params, "
                "created_at, dbscan_eps, dbscan_min_pts, n_clusters) VALUES (?,?,?,?,?,?,?,?,?)");
  ins.bind(1, run.run_id).bind(2, run.model_tag).bind(3, run.pca_k_requested);
  ins.bind(4, run.pca_k_used).bind(5, run.tsne_params.dump()).bind(6, to_epoch(run.created_at));
  ins.bind(7, run.eps).bind(8, run.min_pts).bind(9, run.n_clusters);
  ins.run();
  Statement s(impl_->raw(),
              "INSERT INTO cluster_rows (post_id, run_id, x, y, cluster_label, excluded) "
              "VALUES (?,?,?,?,?,?)");
  for (const auto& r : rows) {
    s.bind(1, r.post_id).bind(2, run.run_id).bind(3, r.x).bind(4, r.y).bind(5, r.cluster_label);
    s.bind(6, r.excluded);
    s.run();
    s.reset();
  }
  tx.commit();
}

std::optional<ProjectionRun> Store::projection_run(const std::string& run_id) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT run_id, model_tag, pca_k, pca_k_used, tsne_params, created_at, dbscan_eps, "
              "dbscan_min_pts, n_clusters FROM projection_runs WHERE run_id = ?");
  s.bind(1, run_id);
  if (!s.step()) return std::nullopt;
  ProjectionRun r;
  r.run_id = s.text(0);
  r.model_tag = s.text(1);
  r.pca_k_requested = static_cast<int>(s.i64(2));
  r.pca_k_used = static_cast<int>(s.i64(3));
  r.tsne_params = json::parse(s.text(4));
  r.created_at = from_epoch(s.i64(5));
  r.eps = s.opt_f64(6);
  if (auto v = s.opt_i64(7)) r.min_pts = static_cast<int>(*v);
  if (auto v = s.opt_i64(8)) r.n_clusters = static_cast<int>(*v);
  return r;
}

std::vector<ClusterRow> Store::cluster_rows(const std::string& run_id) {
  std::lock_guard lock(impl_->mutex);
  impl_->require_run(run_id);
  Statement s(impl_->raw(),
              "SELECT post_id, run_id, x, y, cluster_label, excluded FROM cluster_rows "
              "WHERE run_id = ? ORDER BY length(post_id), post_id");
  s.bind(1, run_id);
  std::vector<ClusterRow> out;
  while (s.step()) {
    ClusterRow r{s.text(0), s.text(1), s.f64(2), s.f64(3), std::nullopt, s.i64(5) != 0};
    if (auto v = s.opt_i64(4)) r.cluster_label = static_cast<int>(*v);
    out.push_back(std::move(r));
  }
  return out;
}

void Store::save_labels(const std::string& run_id, const std::vector<int>& labels, double eps,
                        int min_pts, int n_clusters) {
  std::lock_guard lock(impl_->mutex);
  impl_->require_run(run_id);
  std::vector<std::string> ids;
  {
    Statement s(impl_->raw(),
                "SELECT post_id FROM cluster_rows WHERE run_id = ? ORDER BY length(post_id), "
                "post_id");
    s.bind(1, run_id);
    while (s.step()) ids.push_back(s.text(0));
  }
  if (ids.size() != labels.size()) {
    throw InvalidArgument("label count " + std::to_string(labels.size()) +
                          " does not match the run's " + std::to_string(ids.size()) + " rows");
  }
  Transaction tx(impl_->raw());
  Statement s(impl_->raw(),
              "UPDATE cluster_rows SET cluster_label = ?, excluded = 0 WHERE run_id = ? AND "
              "post_id = ?");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    s.bind(1, labels[i]).bind(2, run_id).bind(3, ids[i]);
    s.run();
    s.reset();
  }
  Statement r(impl_->raw(),
              "UPDATE projection_runs SET dbscan_eps = ?, dbscan_min_pts = ?, n_clusters = ? "
              "WHERE run_id = ?");
  r.bind(1, eps).bind(2, min_pts).bind(3, n_clusters).bind(4, run_id);
  r.run();
  tx.commit();
}

std::int64_t Store::set_excluded(const std::string& run_id, const std::vector<int>& labels,
                                 bool excluded) {
  std::lock_guard lock(impl_->mutex);
  impl_->require_run(run_id);
  std::set<int> present;
  {
    Statement s(impl_->raw(),
                "SELECT DISTINCT cluster_label FROM cluster_rows WHERE run_id = ? AND "
                "cluster_label IS NOT NULL");
    s.bind(1, run_id);
    while (s.step()) present.insert(static_cast<int>(s.i64(0)));
  }
  std::string missing;
  for (int l : std::set<int>(labels.begin(), labels.end())) {
    if (!present.count(l)) missing += (missing.empty() ? "" : ", ") + std::to_string(l);
  }
  if (!missing.empty()) {
    throw NotFound("run '" + run_id + "' has no cluster label(s): " + missing);
  }
  Transaction tx(impl_->raw());
  Statement s(impl_->raw(),
              "UPDATE cluster_rows SET excluded = ? WHERE run_id = ? AND cluster_label = ?");
  std::int64_t touched = 0;
  for (int l : std::set<int>(labels.begin(), labels.end())) {
    s.bind(1, excluded).bind(2, run_id).bind(3, l);
    s.run();
    touched += sqlite3_changes(impl_->raw());
    s.reset();
  }
  tx.commit();
  return touched;
}

std::vector<Post> Store::corpus_candidates(const std::string& run_id,
                                           const CandidateFilter& filter) {
  std::lock_guard lock(impl_->mutex);
  impl_->require_run(run_id);
  std::string sql = std::string("SELECT ") + kPostColumns +
                    " FROM cluster_rows c JOIN posts p ON p.post_id = c.post_id"
                    " WHERE c.run_id = ? AND c.excluded = 0";
  if (!filter.include_noise) sql += " AND (c.cluster_label IS NULL OR c.cluster_label <> -1)";
  if (filter.keyword) sql += " AND p.keyword = ?";
  if (filter.date_range) sql += " AND p.created_at >= ? AND p.created_at < ?";
  sql += std::string(" ORDER BY p.created_at, ") + kPostIdOrder;
  Statement s(impl_->raw(), sql);
  int i = 1;
  s.bind(i++, run_id);
  if (filter.keyword) s.bind(i++, *filter.keyword);
  if (filter.date_range) {
    s.bind(i++, to_epoch(Timestamp{filter.date_range->first}));
    s.bind(i++, to_epoch(Timestamp{filter.date_range->second + std::chrono::days{1}}));
  }
  std::vector<Post> out;
  while (s.step()) out.push_back(read_post(s));
  return out;
}

void Store::record_corpus_export(const std::string& run_id, const std::string& output_dir,
                                 const std::string& spec_hash, const json& manifest,
                                 Timestamp created_at) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "INSERT INTO corpus_exports (run_id, output_dir, spec_hash, manifest, created_at) "
              "VALUES (?,?,?,?,?)");
  s.bind(1, run_id).bind(2, output_dir).bind(3, spec_hash).bind(4, manifest.dump());
  s.bind(5, to_epoch(created_at));
  s.run();
}

// ---------------------------------------------------------------------------

void Store::create_probe_run(const ProbeRun& run) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "INSERT INTO probe_runs (probe_run_id, spec, created_at, report) VALUES (?,?,?,?)");
  s.bind(1, run.probe_run_id).bind(2, run.spec.dump()).bind(3, to_epoch(run.created_at));
  if (run.report) {
    s.bind(4, run.report->dump());
  } else {
    s.bind(4, std::nullopt);
  }
  s.run();
}

std::optional<ProbeRun> Store::probe_run(const std::string& probe_run_id) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT probe_run_id, spec, created_at, report FROM probe_runs WHERE probe_run_id = ?");
  s.bind(1, probe_run_id);
  if (!s.step()) return std::nullopt;
  ProbeRun r{s.text(0), json::parse(s.text(1)), from_epoch(s.i64(2)), std::nullopt};
  if (auto rep = s.opt_text(3)) r.report = json::parse(*rep);
  return r;
}

std::int64_t Store::probe_run_count() {
  std::lock_guard lock(impl_->mutex);
  return impl_->count("probe_runs");
}

std::int64_t Store::add_probe_row(const ProbeRow& row) {
  if (row.parsed_ok != row.prob_tag.has_value()) {
    throw StorageError("constraint violation: prob_tag must be present iff parsed_ok");
  }
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "INSERT INTO probe_rows (probe_run_id, probe_text, generated_text, parsed_ok, "
              "prob_tag, created_at) VALUES (?,?,?,?,?,?)");
  s.bind(1, row.probe_run_id).bind(2, row.probe_text).bind(3, row.generated_text);
  s.bind(4, row.parsed_ok);
  if (row.prob_tag) {
    s.bind(5, to_string(*row.prob_tag));
  } else {
    s.bind(5, std::nullopt);
  }
  s.bind(6, to_epoch(row.created_at));
  s.run();
  return sqlite3_last_insert_rowid(impl_->raw());
}

std::vector<ProbeRow> Store::probe_rows(const std::string& probe_run_id) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(),
              "SELECT row_id, probe_run_id, probe_text, generated_text, parsed_ok, prob_tag, "
              "created_at FROM probe_rows WHERE probe_run_id = ? ORDER BY row_id");
  s.bind(1, probe_run_id);
  std::vector<ProbeRow> out;
  while (s.step()) {
    ProbeRow r;
    r.row_id = s.i64(0);
    r.probe_run_id = s.text(1);
    r.probe_text = s.text(2);
    r.generated_text = s.text(3);
    r.parsed_ok = s.i64(4) != 0;
    if (auto t = s.opt_text(5)) {
      r.prob_tag = prob_tag_from_string(*t);
      if (!r.prob_tag) throw StorageError("unknown prob_tag '" + *t + "' in probe_rows");
    }
    r.created_at = from_epoch(s.i64(6));
    out.push_back(std::move(r));
  }
  return out;
}

void Store::set_probe_report(const std::string& probe_run_id, const json& report) {
  std::lock_guard lock(impl_->mutex);
  Statement s(impl_->raw(), "UPDATE probe_runs SET report = ? WHERE probe_run_id = ?");
  s.bind(1, report.dump()).bind(2, probe_run_id);
  s.run();
  if (sqlite3_changes(impl_->raw()) == 0) {
    throw NotFound("unknown probe run '" + probe_run_id + "'");
  }
}

// ---------------------------------------------------------------------------

std::map<std::string, std::int64_t> Store::table_row_counts() {
  std::lock_guard lock(impl_->mutex);
  std::map<std::string, std::int64_t> out;
  for (const auto& [name, ddl] : schema()) out[name] = impl_->count(name);
  return out;
}

void Store::export_snapshot(const std::filesystem::path& path) {
  std::lock_guard lock(impl_->mutex);
  json doc{{"format", "popscope-snapshot"}, {"schema_version", kSchemaVersion}};
  json ddl = json::array();
  json tables = json::object();
  for (const auto& [name, create] : schema()) {
    ddl.push_back(create);
    if (name == "meta") continue;
    Statement s(impl_->raw(), "SELECT * FROM " + name + " ORDER BY rowid");
    json columns = json::array();
    for (int c = 0; c < s.column_count(); ++c) columns.push_back(s.column_name(c));
    json rows = json::array();
    while (s.step()) {
      json row = json::array();
      for (int c = 0; c < s.column_count(); ++c) {
        switch (s.column_type(c)) {
          case SQLITE_NULL: row.push_back(nullptr); break;
          case SQLITE_INTEGER: row.push_back(s.i64(c)); break;
          case SQLITE_FLOAT: row.push_back(s.f64(c)); break;
          case SQLITE_BLOB: row.push_back(json{{"base64", base64_encode(s.blob(c))}}); break;
          default: row.push_back(s.text(c)); break;
        }
      }
      rows.push_back(std::move(row));
    }
    tables[name] = json{{"columns", std::move(columns)}, {"rows", std::move(rows)}};
  }
  doc["ddl"] = std::move(ddl);
  doc["tables"] = std::move(tables);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write snapshot " + path.string());
  out << doc.dump() << '\n';
}

void Store::import_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot read snapshot " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw StorageError("snapshot " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.value("format", "") != "popscope-snapshot") {
    throw StorageError("not a snapshot file: " + path.string());
  }
  const int version = doc.value("schema_version", -1);
  if (version > kSchemaVersion) {
    throw MigrationError("snapshot schema version " + std::to_string(version) +
                         " is newer than supported version " + std::to_string(kSchemaVersion));
  }
  if (version < 1) throw MigrationError("snapshot has no usable schema version");

  std::lock_guard lock(impl_->mutex);
  for (const auto& [name, ddl] : schema()) {
    if (name != "meta" && impl_->count(name) != 0) {
      throw StorageError("refusing to import into a non-empty store (table " + name + ")");
    }
  }
  Transaction tx(impl_->raw());
  const auto& tables = doc.at("tables");
  for (const auto& [name, ddl] : schema()) {
    if (name == "meta" || !tables.contains(name)) continue;
    const auto& t = tables[name];
    const auto& columns = t.at("columns");
    std::string sql = "INSERT INTO " + name + " (";
    std::string marks;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      sql += (c ? ", " : "") + columns[c].get<std::string>();
      marks += c ? ",?" : "?";
    }
    sql += ") VALUES (" + marks + ")";
    Statement s(impl_->raw(), sql);
    for (const auto& row : t.at("rows")) {
      if (row.size() != columns.size()) {
        throw StorageError("snapshot row width mismatch in table " + name);
      }
      for (std::size_t c = 0; c < row.size(); ++c) {
        const int idx = static_cast<int>(c) + 1;
        const auto& v = row[c];
        if (v.is_null()) {
          s.bind(idx, std::nullopt);
        } else if (v.is_number_integer()) {
          s.bind(idx, v.get<std::int64_t>());
        } else if (v.is_number()) {
          s.bind(idx, v.get<double>());
        } else if (v.is_string()) {
          s.bind(idx, v.get<std::string>());
        } else if (v.is_object() && v.contains("base64")) {
          std::string bytes = base64_decode(v["base64"].get<std::string>());
          s.bind_blob(idx, bytes.data(), bytes.size());
        } else {
          throw StorageError("unsupported snapshot value in table " + name);
        }
      }
      s.run();
      s.reset();
    }
  }
  tx.commit();
}

}  // namespace popscope
