#pragma once

// Store-backed steps of the refinement chain: project stored embeddings to
// 2-D, cluster the projection, and mark clusters excluded.

#include <cstdint>
#include <string>
#include <vector>

#include "popscope/analytics.hpp"
#include "popscope/store.hpp"

namespace popscope {

inline constexpr int kDefaultPcaK = 50;

struct ProjectionSummary {
  std::string run_id;
  std::size_t points = 0;
  int pca_k_used = 0;
};

void to_json(nlohmann::json& j, const ProjectionSummary& s);

/// pca_fit (k clamped to min(pca_k, n, d)) -> pca_transform -> tsne_project,
/// persisted as cluster rows with labels unset.
ProjectionSummary run_projection(Store& store, const std::string& run_id,
                                 const std::string& model_tag, int pca_k,
                                 const TsneParams& tsne, Timestamp created_at);

/// DBSCAN over the stored coordinates; overwrites labels and clears exclusions.
ClusterAssignment recluster(Store& store, const std::string& run_id, const DbscanParams& params);

/// Returns the number of rows whose flag was set to `excluded`.
std::int64_t set_excluded(Store& store, const std::string& run_id,
                          const std::vector<int>& cluster_labels, bool excluded);

}  // namespace popscope
