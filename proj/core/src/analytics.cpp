#include "popscope/analytics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <set>
#include <unordered_map>

#include "popscope/error.hpp"

namespace popscope {

void EmbeddingMatrix::validate() const {
  if (rows.rows() < 1 || rows.cols() < 1) throw InvalidArgument("embedding matrix is empty");
  if (static_cast<Eigen::Index>(post_ids.size()) != rows.rows()) {
    throw InvalidArgument("post ids are not aligned with embedding rows");
  }
  if (!rows.allFinite()) throw InvalidArgument("embedding matrix has non-finite entries");
  std::set<std::string> seen;
  for (const auto& id : post_ids) {
    if (!seen.insert(id).second) throw InvalidArgument("duplicate post id " + id);
  }
}

// ---------------------------------------------------------------------------

PcaModel pca_fit(const Matrix& x, int k) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 1 || d < 1) throw InvalidArgument("pca_fit needs a non-empty matrix");
  if (k < 1 || k > std::min(n, d)) {
    throw InvalidArgument("pca k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(n, d)) + "]");
  }
  if (!x.allFinite()) throw InvalidArgument("pca_fit input has non-finite entries");

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  Matrix centered = x.rowwise() - model.mean.transpose();
  // Thin SVD of the centred data: cost scales with min(n, d), and the right
  // singular vectors stay orthonormal even along null directions.
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("PCA singular value decomposition failed");
  const Vector& sing = svd.singularValues();  // descending
  const Matrix& vectors = svd.matrixV();      // columns
  const double denom = static_cast<double>(std::max<Eigen::Index>(n - 1, 1));

  model.components.resize(k, d);
  model.explained_variance.resize(k);
  for (int c = 0; c < k; ++c) {
    Vector v = vectors.col(c);
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < d; ++i) {
      if (std::abs(v(i)) > std::abs(v(pivot))) pivot = i;
    }
    if (v(pivot) < 0) v = -v;
    model.components.row(c) = v.transpose();
    model.explained_variance(c) = sing(c) * sing(c) / denom;
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  if (x.cols() != model.mean.size()) {
    throw InvalidArgument("pca_transform width " + std::to_string(x.cols()) +
                          " does not match model width " + std::to_string(model.mean.size()));
  }
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

// ---------------------------------------------------------------------------

void TsneParams::validate(Eigen::Index n) const {
  if (!(perplexity > 0)) throw InvalidArgument("perplexity must be positive");
  if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
  if (iterations < 1) throw InvalidArgument("iterations must be positive");
  if (!(early_exaggeration_factor >= 1)) throw InvalidArgument("early exaggeration must be >= 1");
  if (early_exaggeration_iters < 0) throw InvalidArgument("early exaggeration iters must be >= 0");
  if (n < 4) throw InvalidArgument("t-SNE needs at least 4 points, got " + std::to_string(n));
  const double limit = static_cast<double>(n - 1) / 3.0;
  if (perplexity > limit) {
    throw InvalidArgument("perplexity " + std::to_string(perplexity) + " exceeds (n-1)/3 = " +
                          std::to_string(limit) + " for n=" + std::to_string(n));
  }
}

void to_json(nlohmann::json& j, const TsneParams& p) {
  j = nlohmann::json{{"perplexity", p.perplexity},
                     {"learning_rate", p.learning_rate},
                     {"iterations", p.iterations},
                     {"early_exaggeration_factor", p.early_exaggeration_factor},
                     {"early_exaggeration_iters", p.early_exaggeration_iters},
                     {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, TsneParams& p) {
  TsneParams d;
  p.perplexity = j.value("perplexity", d.perplexity);
  p.learning_rate = j.value("learning_rate", d.learning_rate);
  p.iterations = j.value("iterations", d.iterations);
  p.early_exaggeration_factor = j.value("early_exaggeration_factor", d.early_exaggeration_factor);
  p.early_exaggeration_iters = j.value("early_exaggeration_iters", d.early_exaggeration_iters);
  p.seed = j.value("seed", d.seed);
}

namespace tsne {
namespace {

std::vector<double> squared_distances(const Matrix& y) {
  const Eigen::Index n = y.rows();
  std::vector<double> dist(static_cast<std::size_t>(n * n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double s = (y.row(i) - y.row(j)).squaredNorm();
      dist[static_cast<std::size_t>(i * n + j)] = s;
      dist[static_cast<std::size_t>(j * n + i)] = s;
    }
  }
  return dist;
}

}  // namespace

ConditionalAffinities conditional_affinities(const Matrix& y, double perplexity) {
  const Eigen::Index n = y.rows();
  if (n < 2) throw InvalidArgument("affinities need at least two points");
  if (!(perplexity > 0)) throw InvalidArgument("perplexity must be positive");
  const auto dist = squared_distances(y);
  const double target = std::log(perplexity);  // entropy in nats

  ConditionalAffinities out{Matrix::Zero(n, n), Vector::Zero(n)};
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* di = &dist[static_cast<std::size_t>(i * n)];
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, di[j]);
    }
    // Shifting by the nearest distance keeps the largest weight at exp(0).
    auto entropy_at = [&](double beta, double& sum) {
      sum = 0;
      double weighted = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) {
          row[static_cast<std::size_t>(j)] = 0;
          continue;
        }
        const double shifted = di[j] - dmin;
        const double w = std::exp(-beta * shifted);
        row[static_cast<std::size_t>(j)] = w;
        sum += w;
        weighted += shifted * w;
      }
      return std::log(sum) + beta * weighted / sum;
    };

    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    bool converged = false;
    double sum = 0;
    for (int step = 0; step < kMaxBisectionSteps; ++step) {
      const double h = entropy_at(beta, sum);
      if (std::abs(std::exp(h) - perplexity) <= kPerplexityTolerance) {
        converged = true;
        break;
      }
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    if (!converged) {
      throw NumericError("perplexity calibration did not converge for point " + std::to_string(i) +
                         " after " + std::to_string(kMaxBisectionSteps) + " bisection steps");
    }
    out.beta(i) = beta;
    for (Eigen::Index j = 0; j < n; ++j) out.p(i, j) = row[static_cast<std::size_t>(j)] / sum;
  }
  return out;
}

Matrix joint_affinities(const Matrix& conditional) {
  const double n = static_cast<double>(conditional.rows());
  return (conditional + conditional.transpose()) / (2.0 * n);
}

double kl_divergence(const Matrix& p, const Matrix& z) {
  const Eigen::Index n = z.rows();
  Matrix num = Matrix::Zero(n, n);
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double w = 1.0 / (1.0 + (z.row(i) - z.row(j)).squaredNorm());
      num(i, j) = num(j, i) = w;
      total += 2 * w;
    }
  }
  double kl = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0) continue;
      kl += p(i, j) * std::log(p(i, j) / (num(i, j) / total));
    }
  }
  return kl;
}

Matrix kl_gradient(const Matrix& p, const Matrix& z) {
  const Eigen::Index n = z.rows();
  Matrix num = Matrix::Zero(n, n);
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double w = 1.0 / (1.0 + (z.row(i) - z.row(j)).squaredNorm());
      num(i, j) = num(j, i) = w;
      total += 2 * w;
    }
  }
  Matrix grad = Matrix::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double mult = 4.0 * (p(i, j) - num(i, j) / total) * num(i, j);
      grad.row(i) += mult * (z.row(i) - z.row(j));
    }
  }
  return grad;
}

Matrix initial_layout(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  Matrix z(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = normal(rng);
    z(i, 1) = normal(rng);
  }
  return z;
}

Matrix optimize(const Matrix& p, Matrix z0, const TsneParams& params,
                const IterationObserver& observer) {
  const Eigen::Index n = z0.rows();
  const auto un = static_cast<std::size_t>(n);
  // Row-major flat copies; the inner loop is the whole cost of t-SNE.
  std::vector<double> pf(un * un);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) pf[static_cast<std::size_t>(i) * un + static_cast<std::size_t>(j)] = p(i, j);
  }
  std::vector<double> z(un * 2), update(un * 2, 0.0), grad(un * 2), num(un * un);
  for (std::size_t i = 0; i < un; ++i) {
    z[2 * i] = z0(static_cast<Eigen::Index>(i), 0);
    z[2 * i + 1] = z0(static_cast<Eigen::Index>(i), 1);
  }
  Matrix snapshot(n, 2);

  for (int iter = 0; iter < params.iterations; ++iter) {
    const double exaggeration =
        iter < params.early_exaggeration_iters ? params.early_exaggeration_factor : 1.0;
    const double momentum = iter < kMomentumSwitchIter ? kInitialMomentum : kFinalMomentum;

    double total = 0;
    for (std::size_t i = 0; i < un; ++i) {
      const double xi = z[2 * i], yi = z[2 * i + 1];
      for (std::size_t j = i + 1; j < un; ++j) {
        const double dx = xi - z[2 * j], dy = yi - z[2 * j + 1];
        const double w = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * un + j] = w;
        num[j * un + i] = w;
        total += w;
      }
    }
    total *= 2;
    const double inv_total = 1.0 / total;

    for (std::size_t i = 0; i < un; ++i) {
      double gx = 0, gy = 0;
      const double xi = z[2 * i], yi = z[2 * i + 1];
      const double* prow = &pf[i * un];
      const double* nrow = &num[i * un];
      for (std::size_t j = 0; j < un; ++j) {
        if (j == i) continue;
        const double mult = (exaggeration * prow[j] - nrow[j] * inv_total) * nrow[j];
        gx += mult * (xi - z[2 * j]);
        gy += mult * (yi - z[2 * j + 1]);
      }
      grad[2 * i] = 4.0 * gx;
      grad[2 * i + 1] = 4.0 * gy;
    }

    double mx = 0, my = 0;
    for (std::size_t k = 0; k < un; ++k) {
      update[2 * k] = momentum * update[2 * k] - params.learning_rate * grad[2 * k];
      update[2 * k + 1] = momentum * update[2 * k + 1] - params.learning_rate * grad[2 * k + 1];
      z[2 * k] += update[2 * k];
      z[2 * k + 1] += update[2 * k + 1];
      mx += z[2 * k];
      my += z[2 * k + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t k = 0; k < un; ++k) {
      z[2 * k] -= mx;
      z[2 * k + 1] -= my;
    }

    if (observer) {
      for (std::size_t k = 0; k < un; ++k) {
        snapshot(static_cast<Eigen::Index>(k), 0) = z[2 * k];
        snapshot(static_cast<Eigen::Index>(k), 1) = z[2 * k + 1];
      }
      observer(iter, snapshot);
    }
  }

  Matrix out(n, 2);
  for (std::size_t k = 0; k < un; ++k) {
    out(static_cast<Eigen::Index>(k), 0) = z[2 * k];
    out(static_cast<Eigen::Index>(k), 1) = z[2 * k + 1];
  }
  if (!out.allFinite()) throw NumericError("t-SNE diverged to non-finite coordinates");
  return out;
}

}  // namespace tsne

Matrix tsne_project(const Matrix& y, const TsneParams& params) {
  params.validate(y.rows());
  if (!y.allFinite()) throw InvalidArgument("t-SNE input has non-finite entries");
  auto cond = tsne::conditional_affinities(y, params.perplexity);
  Matrix p = tsne::joint_affinities(cond.p);
  return tsne::optimize(p, tsne::initial_layout(y.rows(), params.seed), params);
}

// ---------------------------------------------------------------------------

void DbscanParams::validate() const {
  if (!(eps > 0) || std::isnan(eps)) throw InvalidArgument("eps must be positive");
  if (min_pts < 1) throw InvalidArgument("min_pts must be positive");
}

void to_json(nlohmann::json& j, const ClusterAssignment& a) {
  j = nlohmann::json{{"labels", a.labels}, {"n_clusters", a.n_clusters}};
}

namespace {

struct CellHash {
  std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& c) const {
    return std::hash<std::int64_t>()(c.first * 73856093LL ^ c.second * 19349663LL);
  }
};

// Uniform grid with cell side eps: every eps-neighbour of a point lies in the
// 3x3 block of cells around it. Falls back to a linear scan when the grid
// would be degenerate.
class NeighbourIndex {
 public:
  NeighbourIndex(const Matrix& pts, double eps) : pts_(pts), eps2_(eps * eps) {
    const Eigen::Index n = pts.rows();
    if (n == 0) return;
    min_x_ = pts.col(0).minCoeff();
    min_y_ = pts.col(1).minCoeff();
    const double span = std::max(pts.col(0).maxCoeff() - min_x_, pts.col(1).maxCoeff() - min_y_);
    use_grid_ = std::isfinite(eps) && span / eps < 1e9;
    if (!use_grid_) return;
    inv_eps_ = 1.0 / eps;
    for (Eigen::Index i = 0; i < n; ++i) cells_[cell_of(i)].push_back(i);
  }

  template <typename Fn>
  void for_each_neighbour(Eigen::Index i, Fn&& fn) const {
    const double xi = pts_(i, 0), yi = pts_(i, 1);
    auto consider = [&](Eigen::Index j) {
      const double dx = xi - pts_(j, 0), dy = yi - pts_(j, 1);
      if (dx * dx + dy * dy <= eps2_) fn(j);
    };
    if (!use_grid_) {
      for (Eigen::Index j = 0; j < pts_.rows(); ++j) consider(j);
      return;
    }
    auto [cx, cy] = cell_of(i);
    for (std::int64_t ox = -1; ox <= 1; ++ox) {
      for (std::int64_t oy = -1; oy <= 1; ++oy) {
        auto it = cells_.find({cx + ox, cy + oy});
        if (it == cells_.end()) continue;
        for (Eigen::Index j : it->second) consider(j);
      }
    }
  }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(Eigen::Index i) const {
    return {static_cast<std::int64_t>(std::floor((pts_(i, 0) - min_x_) * inv_eps_)),
            static_cast<std::int64_t>(std::floor((pts_(i, 1) - min_y_) * inv_eps_))};
  }

  const Matrix& pts_;
  double eps2_;
  double min_x_ = 0, min_y_ = 0, inv_eps_ = 0;
  bool use_grid_ = false;
  std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::vector<Eigen::Index>, CellHash>
      cells_;
};

}  // namespace

ClusterAssignment dbscan(const Matrix& points, const DbscanParams& params) {
  params.validate();
  if (points.rows() > 0 && points.cols() != 2) {
    throw InvalidArgument("dbscan expects an n x 2 projection");
  }
  if (!points.allFinite()) throw InvalidArgument("dbscan input has non-finite coordinates");
  const Eigen::Index n = points.rows();
  ClusterAssignment out;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  if (n == 0) return out;

  NeighbourIndex index(points, params.eps);
  std::vector<char> core(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int count = 0;
    index.for_each_neighbour(i, [&](Eigen::Index) { ++count; });
    core[static_cast<std::size_t>(i)] = count >= params.min_pts;
  }

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(static_cast<std::size_t>(n), kUnvisited);
  int next = 0;
  std::deque<Eigen::Index> frontier;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& li = label[static_cast<std::size_t>(i)];
    if (li != kUnvisited) continue;
    if (!core[static_cast<std::size_t>(i)]) {
      li = kNoise;
      continue;
    }
    const int c = next++;
    li = c;
    frontier.push_back(i);
    while (!frontier.empty()) {
      Eigen::Index p = frontier.front();
      frontier.pop_front();
      index.for_each_neighbour(p, [&](Eigen::Index q) {
        auto& lq = label[static_cast<std::size_t>(q)];
        if (lq == kNoise) {
          lq = c;  // border point previously seen as noise
        } else if (lq == kUnvisited) {
          lq = c;
          if (core[static_cast<std::size_t>(q)]) frontier.push_back(q);
        }
      });
    }
  }

  std::vector<int> remap(static_cast<std::size_t>(next), -1);
  int assigned = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int l = label[static_cast<std::size_t>(i)];
    if (l < 0) continue;
    if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = assigned++;
    out.labels[static_cast<std::size_t>(i)] = remap[static_cast<std::size_t>(l)];
  }
  out.n_clusters = assigned;
  return out;
}

}  // namespace popscope
