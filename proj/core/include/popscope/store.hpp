#pragma once

// Embedded relational persistence (SQLite) for everything the pipeline
// produces. One Store owns one connection; all calls are serialized, so a
// Store may be shared across threads. A file-backed store also holds an
// exclusive advisory lock on `<path>.lock` for its lifetime.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/backends.hpp"
#include "popscope/keywords.hpp"
#include "popscope/post.hpp"
#include "popscope/prob_tag.hpp"
#include "popscope/time.hpp"

struct sqlite3;

namespace popscope {

inline constexpr int kSchemaVersion = 1;

struct StoredUser {
  std::string author_id;
  std::string handle;
  std::string display_name;
  std::int64_t followers = 0;
  Timestamp fetched_at{};
  friend bool operator==(const StoredUser&, const StoredUser&) = default;
};

struct ClusterRow {
  std::string post_id;
  std::string run_id;
  double x = 0;
  double y = 0;
  std::optional<int> cluster_label;  // unset until the first clustering; -1 is noise
  bool excluded = false;
  friend bool operator==(const ClusterRow&, const ClusterRow&) = default;
};

struct ProjectionRun {
  std::string run_id;
  std::string model_tag;
  int pca_k_requested = 0;
  int pca_k_used = 0;
  nlohmann::json tsne_params;
  Timestamp created_at{};
  std::optional<double> eps;
  std::optional<int> min_pts;
  std::optional<int> n_clusters;
};

struct ProbeRow {
  std::int64_t row_id = 0;
  std::string probe_run_id;
  std::string probe_text;
  std::string generated_text;
  bool parsed_ok = false;
  std::optional<ProbTag> prob_tag;  // present iff parsed_ok
  Timestamp created_at{};
};

struct ProbeRun {
  std::string probe_run_id;
  nlohmann::json spec;
  Timestamp created_at{};
  std::optional<nlohmann::json> report;
};

struct UpsertResult {
  std::int64_t inserted = 0;
  std::int64_t duplicates = 0;
};

struct CandidateFilter {
  std::optional<std::string> keyword;
  std::optional<std::pair<Date, Date>> date_range;  // inclusive days
  bool include_noise = true;
};

class Store {
 public:
  /// Opens (creating if needed) the store at `path`; ":memory:" gives a
  /// private in-memory store. Throws MigrationError for a newer schema and
  /// StorageError when another process holds the store.
  static Store open(const std::filesystem::path& path);

  Store(Store&&) noexcept;
  Store& operator=(Store&&) noexcept;
  ~Store();

  // -- keywords ------------------------------------------------------------
  void save_trend_reports(const std::vector<TrendReport>& reports, std::string_view source);
  std::vector<TrendReport> trend_reports();

  // -- posts and users -----------------------------------------------------
  /// Idempotent on post_id: inserted + duplicates = posts.size().
  UpsertResult upsert_posts(const std::vector<Post>& posts);
  std::optional<Post> post(const std::string& post_id);
  /// Ascending by post id.
  std::vector<Post> posts(const std::optional<std::string>& keyword = std::nullopt);
  std::int64_t post_count();
  void upsert_users(const std::vector<StoredUser>& users);
  std::optional<StoredUser> user(const std::string& author_id);

  // -- embeddings ----------------------------------------------------------
  /// Row i of `vectors` belongs to post_ids[i]. Stored as packed little-endian float32.
  void put_embeddings(const std::string& model_tag, const std::vector<std::string>& post_ids,
                      const Matrix& vectors);
  /// Post ids (ascending) with their vectors widened back to double.
  std::pair<std::vector<std::string>, Matrix> embeddings(const std::string& model_tag);
  std::vector<std::string> posts_missing_embeddings(const std::string& model_tag);

  // -- projections and clusters -------------------------------------------
  /// Replaces any earlier run with the same id.
  void save_projection(const ProjectionRun& run, const std::vector<ClusterRow>& rows);
  std::optional<ProjectionRun> projection_run(const std::string& run_id);
  /// Ascending by post id. Throws NotFound for an unknown run.
  std::vector<ClusterRow> cluster_rows(const std::string& run_id);
  /// Overwrites labels (aligned to cluster_rows order) and clears every exclusion.
  void save_labels(const std::string& run_id, const std::vector<int>& labels, double eps,
                   int min_pts, int n_clusters);
  /// Flags every row carrying one of `labels`; returns the number of rows touched.
  std::int64_t set_excluded(const std::string& run_id, const std::vector<int>& labels,
                            bool excluded);

  /// Posts of the run that are not excluded (noise only when asked for),
  /// ascending by created_at.
  std::vector<Post> corpus_candidates(const std::string& run_id, const CandidateFilter& filter);

  void record_corpus_export(const std::string& run_id, const std::string& output_dir,
                            const std::string& spec_hash, const nlohmann::json& manifest,
                            Timestamp created_at);

  // -- probes --------------------------------------------------------------
  void create_probe_run(const ProbeRun& run);
  std::optional<ProbeRun> probe_run(const std::string& probe_run_id);
  std::int64_t probe_run_count();
  std::int64_t add_probe_row(const ProbeRow& row);
  std::vector<ProbeRow> probe_rows(const std::string& probe_run_id);
  void set_probe_report(const std::string& probe_run_id, const nlohmann::json& report);

  // -- snapshots -----------------------------------------------------------
  void export_snapshot(const std::filesystem::path& path);
  /// Only into an empty store; a snapshot from a newer schema is a MigrationError.
  void import_snapshot(const std::filesystem::path& path);

  std::map<std::string, std::int64_t> table_row_counts();
  static const std::vector<std::string>& table_names();

 private:
  struct Impl;
  explicit Store(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace popscope
