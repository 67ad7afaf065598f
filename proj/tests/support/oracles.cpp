#include "support/oracles.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace popscope::testing {

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    if (l < 0) {
      out.push_back(-1);
      continue;
    }
    auto it = remap.try_emplace(l, static_cast<int>(remap.size())).first;
    out.push_back(it->second);
  }
  return out;
}

std::vector<int> brute_force_dbscan(const Eigen::MatrixXd& points, double eps, int min_pts) {
  const int n = static_cast<int>(points.rows());
  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if ((points.row(i) - points.row(j)).norm() <= eps) nbr[i].push_back(j);

  std::vector<bool> core(n);
  for (int i = 0; i < n; ++i) core[i] = static_cast<int>(nbr[i].size()) >= min_pts;

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i)
    if (core[i])
      for (int j : nbr[i])
        if (core[j]) parent[find(i)] = find(j);

  // A component is identified by its smallest core index.
  std::vector<int> min_core(n, n);
  for (int i = 0; i < n; ++i)
    if (core[i]) min_core[find(i)] = std::min(min_core[find(i)], i);

  std::vector<int> raw(n, -1);
  for (int i = 0; i < n; ++i) {
    if (core[i]) {
      raw[i] = min_core[find(i)];
      continue;
    }
    int best = n;
    for (int j : nbr[i])
      if (core[j]) best = std::min(best, min_core[find(j)]);
    if (best < n) raw[i] = best;
  }
  return canonical_labels(raw);
}

Blobs gaussian_blobs(int k, int per_blob, int d, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Blobs b;
  b.points.resize(static_cast<Eigen::Index>(k) * per_blob, d);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd centre(d);
    for (int j = 0; j < d; ++j) centre(j) = gauss(rng);
    centre *= separation / centre.norm();
    for (int i = 0; i < per_blob; ++i) {
      const auto row = static_cast<Eigen::Index>(c) * per_blob + i;
      for (int j = 0; j < d; ++j) b.points(row, j) = centre(j) + gauss(rng);
      b.truth.push_back(c);
    }
  }
  return b;
}

double cluster_purity(const std::vector<int>& predicted, const std::vector<int>& truth) {
  std::map<int, std::map<int, int>> table;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] >= 0) ++table[predicted[i]][truth[i]];
  std::size_t pure = 0;
  for (auto& [cluster, counts] : table) {
    int best = 0;
    for (auto& [t, c] : counts) best = std::max(best, c);
    pure += static_cast<std::size_t>(best);
  }
  return predicted.empty() ? 0.0 : static_cast<double>(pure) / static_cast<double>(predicted.size());
}

double knn_purity(const Eigen::MatrixXd& points, const std::vector<int>& truth, int k) {
  const auto n = points.rows();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Eigen::Index>> dist;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dist.emplace_back((points.row(i) - points.row(j)).squaredNorm(), j);
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    int same = 0;
    for (int m = 0; m < k; ++m) same += truth[dist[m].second] == truth[i];
    total += static_cast<double>(same) / k;
  }
  return total / static_cast<double>(n);
}

MetaRecord random_meta_record(std::mt19937_64& rng) {
  static const std::vector<std::string> atoms{
      "a", "Z", "0", " ", "  ", "|", "||", " || ", "[", "[[", "]", "]]", "\\", "\\|", "\\n",
      "\n", "\r", "\t", ":", "text: ", "created: ", "probability: ", "location: ",
      "\xc3\xa9", "\xe2\x9c\x93", "\xf0\x9f\x90\xb6", "#tag", "@user", "http://x.y/z?q=1"};
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  MetaRecord r;
  do {
    r.text.clear();
    const std::size_t len = 1 + pick(12);
    for (std::size_t i = 0; i < len; ++i) r.text += atoms[pick(atoms.size())];
  } while (r.text.empty());
  // 1970..2099, whole seconds.
  r.created = Timestamp{std::chrono::seconds{static_cast<std::int64_t>(rng() % 4102444800ULL)}};
  switch (pick(3)) {
    case 0: break;
    case 1: r.location = "USA"; break;
    default: {
      std::string loc;
      const std::size_t len = pick(6);
      for (std::size_t i = 0; i < len; ++i) loc += atoms[pick(atoms.size())];
      r.location = loc;
    }
  }
  r.prob = kAllProbTags[pick(4)];
  return r;
}

double chi_square(const std::array<std::size_t, 4>& observed, const std::array<double, 4>& expected) {
  double n = 0;
  for (auto o : observed) n += static_cast<double>(o);
  double stat = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double e = n * expected[i];
    const double diff = static_cast<double>(observed[i]) - e;
    stat += diff * diff / e;
  }
  return stat;
}

}  // namespace popscope::testing
