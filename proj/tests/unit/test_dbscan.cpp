#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "popscope/analytics.hpp"
#include "popscope/error.hpp"
#include "support/oracles.hpp"

using namespace popscope;
using namespace popscope::testing;

namespace {

Matrix uniform_points(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, 2);
  for (int i = 0; i < n; ++i) m(i, 0) = u(rng), m(i, 1) = u(rng);
  return m;
}

}  // namespace

TEST(Dbscan, TwoSeparatedGroups) {
  Matrix m(10, 2);
  for (int i = 0; i < 5; ++i) {
    m.row(i) << 0.01 * i, 0;
    m.row(5 + i) << 100.0 + 0.01 * i, 0;
  }
  auto a = dbscan(m, {1.0, 3});
  EXPECT_EQ(a.n_clusters, 2);
  EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}));
}

TEST(Dbscan, MinPtsAboveNIsAllNoise) {
  std::mt19937_64 rng(1);
  auto a = dbscan(uniform_points(10, rng), {10.0, 11});
  EXPECT_EQ(a.n_clusters, 0);
  for (int l : a.labels) EXPECT_EQ(l, -1);
}

TEST(Dbscan, NeighbourhoodIsInclusive) {
  Matrix m(2, 2);
  m << 0, 0, 0.5, 0;
  EXPECT_EQ(dbscan(m, {0.5, 2}).n_clusters, 1);
  EXPECT_EQ(dbscan(m, {0.4999, 2}).n_clusters, 0);
}

TEST(Dbscan, BorderJoinsEarlierCluster) {
  // Two chains whose ends are both within eps of the border point 2.
  Matrix m(5, 2);
  m << 0, 0, 0.9, 0, 1.8, 0, 2.7, 0, 3.6, 0;
  auto a = dbscan(m, {0.95, 3});
  // Cores are 1 and 3 (each has 3 points in range); 2 is a core too, so one cluster.
  EXPECT_EQ(a.n_clusters, 1);

  Matrix b(7, 2);
  b << 0, 0, 0.5, 0, 1.0, 0,  // cluster A, core at index 1
      1.9, 0,                   // border between A and B
      2.8, 0, 3.3, 0, 3.8, 0;   // cluster B, core at index 5
  auto r = dbscan(b, {0.9, 3});
  EXPECT_EQ(r.labels[3], r.labels[1]);
  EXPECT_EQ(r.labels, brute_force_dbscan(b, 0.9, 3));
}

TEST(Dbscan, LabelsNumberedByFirstAppearance) {
  std::mt19937_64 rng(2);
  auto a = dbscan(uniform_points(150, rng), {0.08, 4});
  EXPECT_EQ(a.labels, canonical_labels(a.labels));
  std::set<int> seen(a.labels.begin(), a.labels.end());
  for (int c = 0; c < a.n_clusters; ++c) EXPECT_TRUE(seen.count(c));
  for (int l : a.labels) EXPECT_LT(l, a.n_clusters);
}

TEST(Dbscan, MatchesBruteForceOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 200);
    Matrix m = uniform_points(n, rng);
    const double eps = 0.02 + 0.2 * static_cast<double>(rng() % 1000) / 1000.0;
    const int min_pts = 1 + static_cast<int>(rng() % 8);
    auto a = dbscan(m, {eps, min_pts});
    ASSERT_EQ(canonical_labels(a.labels), brute_force_dbscan(m, eps, min_pts))
        << "n=" << n << " eps=" << eps << " min_pts=" << min_pts;
  }
}

TEST(Dbscan, SpecExampleUniform200) {
  std::mt19937_64 rng(4);
  Matrix m = uniform_points(200, rng);
  EXPECT_EQ(dbscan(m, {0.1, 4}).labels, brute_force_dbscan(m, 0.1, 4));
}

TEST(Dbscan, CoreSetIsOrderIndependent) {
  std::mt19937_64 rng(5);
  Matrix m = uniform_points(120, rng);
  const DbscanParams params{0.1, 5};
  std::vector<int> perm(120);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix shuffled(120, 2);
  for (int i = 0; i < 120; ++i) shuffled.row(i) = m.row(perm[i]);

  auto cores = [&](const Matrix& pts) {
    std::set<std::pair<double, double>> out;
    for (int i = 0; i < pts.rows(); ++i) {
      int count = 0;
      for (int j = 0; j < pts.rows(); ++j) count += (pts.row(i) - pts.row(j)).norm() <= params.eps;
      if (count >= params.min_pts) out.emplace(pts(i, 0), pts(i, 1));
    }
    return out;
  };
  // Core points are exactly the non-noise points whose label is shared by a
  // core-sized neighbourhood; check the clustered point sets agree.
  auto clustered = [&](const Matrix& pts) {
    auto a = dbscan(pts, params);
    std::set<std::pair<double, double>> out;
    for (int i = 0; i < pts.rows(); ++i)
      if (a.labels[i] >= 0) out.emplace(pts(i, 0), pts(i, 1));
    return std::make_pair(out, a.n_clusters);
  };
  EXPECT_EQ(cores(m), cores(shuffled));
  EXPECT_EQ(clustered(m), clustered(shuffled));
}

TEST(Dbscan, ParamValidation) {
  Matrix m = Matrix::Zero(3, 2);
  EXPECT_THROW(dbscan(m, {0.0, 3}), InvalidArgument);
  EXPECT_THROW(dbscan(m, {1.0, 0}), InvalidArgument);
  m(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(dbscan(m, {1.0, 1}), InvalidArgument);
}
