#pragma once

// PCA pre-reduction, exact t-SNE to two dimensions, and DBSCAN. All three are
// pure and deterministic: the same input and seed give bitwise-identical output.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace popscope {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EmbeddingMatrix {
  Matrix rows;  // n x d
  std::vector<std::string> post_ids;

  /// n >= 1, all entries finite, ids unique and aligned with rows.
  void validate() const;
};

struct PcaModel {
  Vector mean;                 // d
  Matrix components;           // k x d, orthonormal rows
  Vector explained_variance;   // k, non-increasing
};

/// Top-k eigenvectors of the sample covariance. Each component is signed so
/// that its largest-magnitude coordinate is positive.
PcaModel pca_fit(const Matrix& x, int k);
/// (x - mean) * components^T
Matrix pca_transform(const PcaModel& model, const Matrix& x);

struct TsneParams {
  double perplexity = 30.0;
  double learning_rate = 200.0;
  int iterations = 1000;
  double early_exaggeration_factor = 12.0;
  int early_exaggeration_iters = 250;
  std::uint64_t seed = 0;

  /// Checks field bounds, and perplexity against the point count.
  void validate(Eigen::Index n) const;
};

void to_json(nlohmann::json& j, const TsneParams& p);
void from_json(const nlohmann::json& j, TsneParams& p);

/// Exact O(n^2) t-SNE of the rows of `y` into two dimensions, centred at the origin.
Matrix tsne_project(const Matrix& y, const TsneParams& params);

namespace tsne {

inline constexpr int kMaxBisectionSteps = 200;
inline constexpr double kPerplexityTolerance = 1e-5;
inline constexpr int kMomentumSwitchIter = 250;
inline constexpr double kInitialMomentum = 0.5;
inline constexpr double kFinalMomentum = 0.8;
inline constexpr double kInitStddev = 1e-4;

struct ConditionalAffinities {
  Matrix p;      // row i holds p_{j|i}; zero diagonal; rows sum to one
  Vector beta;   // per-point precision 1 / (2 sigma_i^2)
};

/// Calibrates each row's Gaussian precision by bisection so that the row's
/// perplexity (2^entropy in bits) matches `perplexity`.
ConditionalAffinities conditional_affinities(const Matrix& y, double perplexity);

/// (P + P^T) / (2n)
Matrix joint_affinities(const Matrix& conditional);

/// KL(P || Q) for embedding `z` (n x 2) under Student-t low-dimensional affinities.
double kl_divergence(const Matrix& p, const Matrix& z);

/// Analytic gradient of kl_divergence with respect to `z`.
Matrix kl_gradient(const Matrix& p, const Matrix& z);

/// Seeded N(0, kInitStddev^2) starting layout.
Matrix initial_layout(Eigen::Index n, std::uint64_t seed);

using IterationObserver = std::function<void(int iteration, const Matrix& z)>;

/// Momentum gradient descent from `z0` on joint affinities `p`. The observer,
/// when set, sees the layout after every update.
Matrix optimize(const Matrix& p, Matrix z0, const TsneParams& params,
                const IterationObserver& observer = {});

}  // namespace tsne

struct DbscanParams {
  double eps = 0.5;
  int min_pts = 5;
  void validate() const;
};

struct ClusterAssignment {
  std::vector<int> labels;  // -1 noise, otherwise 0..n_clusters-1
  int n_clusters = 0;
};

void to_json(nlohmann::json& j, const ClusterAssignment& a);

/// DBSCAN over the rows of an n x 2 matrix with inclusive (<= eps) Euclidean
/// neighbourhoods that count the point itself. A border point belongs to the
/// first cluster whose expansion reaches it, clusters being expanded in
/// ascending index order of their first core point. Labels are then numbered
/// by first appearance over ascending point index.
ClusterAssignment dbscan(const Matrix& points, const DbscanParams& params);

}  // namespace popscope
