#include "popscope/projection.hpp"

#include <algorithm>

#include "popscope/error.hpp"

namespace popscope {

void to_json(nlohmann::json& j, const ProjectionSummary& s) {
  j = nlohmann::json{{"run_id", s.run_id}, {"points", s.points}, {"pca_k_used", s.pca_k_used}};
}

ProjectionSummary run_projection(Store& store, const std::string& run_id,
                                 const std::string& model_tag, int pca_k,
                                 const TsneParams& tsne, Timestamp created_at) {
  if (run_id.empty()) throw InvalidArgument("run id must be non-empty");
  if (pca_k < 1) throw InvalidArgument("pca_k must be positive");
  EmbeddingMatrix emb;
  std::tie(emb.post_ids, emb.rows) = store.embeddings(model_tag);
  if (emb.rows.rows() < 4) {
    throw InsufficientData("projection needs at least 4 embedded posts for model tag '" +
                           model_tag + "', found " + std::to_string(emb.rows.rows()));
  }
  emb.validate();

  const auto k = static_cast<int>(
      std::min<Eigen::Index>({static_cast<Eigen::Index>(pca_k), emb.rows.rows(), emb.rows.cols()}));
  PcaModel pca = pca_fit(emb.rows, k);
  Matrix reduced = pca_transform(pca, emb.rows);
  Matrix xy = tsne_project(reduced, tsne);

  std::vector<ClusterRow> rows;
  rows.reserve(emb.post_ids.size());
  for (std::size_t i = 0; i < emb.post_ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    rows.push_back({emb.post_ids[i], run_id, xy(r, 0), xy(r, 1), std::nullopt, false});
  }
  ProjectionRun run;
  run.run_id = run_id;
  run.model_tag = model_tag;
  run.pca_k_requested = pca_k;
  run.pca_k_used = k;
  run.tsne_params = tsne;
  run.created_at = created_at;
  store.save_projection(run, rows);
  return {run_id, rows.size(), k};
}

ClusterAssignment recluster(Store& store, const std::string& run_id, const DbscanParams& params) {
  params.validate();
  auto rows = store.cluster_rows(run_id);
  Matrix xy(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xy(static_cast<Eigen::Index>(i), 0) = rows[i].x;
    xy(static_cast<Eigen::Index>(i), 1) = rows[i].y;
  }
  ClusterAssignment a = dbscan(xy, params);
  store.save_labels(run_id, a.labels, params.eps, params.min_pts, a.n_clusters);
  return a;
}

std::int64_t set_excluded(Store& store, const std::string& run_id,
                          const std::vector<int>& cluster_labels, bool excluded) {
  if (cluster_labels.empty()) throw InvalidArgument("no cluster labels given");
  return store.set_excluded(run_id, cluster_labels, excluded);
}

}  // namespace popscope
