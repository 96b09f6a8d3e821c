#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "terrain/error.hpp"
#include "terrain/sampling.hpp"

using namespace terrain;
using namespace terrain::test;

namespace {

std::uint64_t seed_with_start(std::size_t n, std::size_t start) {
  for (std::uint64_t s = 0;; ++s)
    if (fps_start_index(n, s) == start)
      return s;
}

double min_pairwise(const PointCloud &c, const std::vector<std::size_t> &idx) {
  double best = INFINITY;
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      best = std::min(best, oracle::dist(c.points[idx[a]], c.points[idx[b]]));
  return best;
}

} // namespace

TEST(KdIndex, SinglePointIsAlwaysNearest) {
  const auto index = build_index(PointCloud({Point3(3, -1, 2)}));
  for (const Point3 q : {Point3(0, 0, 0), Point3(100, 100, 100), Point3(3, -1, 2)})
    EXPECT_EQ(index.nearest(q).index, 0u);
}

TEST(KdIndex, EmptyIndexQueriesThrow) {
  const auto index = build_index(PointCloud{});
  EXPECT_TRUE(index.empty());
  EXPECT_THROW(index.knn(Point3(0, 0, 0), 1), QueryError);
  EXPECT_THROW(index.nearest_distance(Point3(0, 0, 0)), QueryError);
}

TEST(KdIndex, ZeroKIsQueryError) {
  const auto index = build_index(PointCloud({Point3(0, 0, 0)}));
  EXPECT_THROW(index.knn(Point3(0, 0, 0), 0), QueryError);
}

TEST(KdIndex, TwoPointExample) {
  const auto index = build_index(PointCloud({Point3(0, 0, 0), Point3(1, 0, 0)}));
  const auto hits = index.knn(Point3(0.1f, 0, 0), 1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].index, 0u);
  EXPECT_NEAR(hits[0].distance, 0.1, 1e-7);
}

TEST(KdIndex, KLargerThanSizeReturnsAll) {
  std::mt19937_64 gen(1);
  const PointCloud c = random_cloud(gen, 6);
  const auto hits = build_index(c).knn(Point3(0, 0, 0), 50);
  EXPECT_EQ(hits.size(), 6u);
}

TEST(KdIndex, NearestDistanceExamples) {
  const auto index = build_index(PointCloud({Point3(0, 0, 0)}));
  EXPECT_EQ(index.nearest_distance(Point3(3, 4, 0)), 5.0);
  EXPECT_EQ(index.nearest_distance(Point3(0, 0, 0)), 0.0);
}

TEST(KdIndex, SelfDistanceIsZero) {
  std::mt19937_64 gen(4);
  const PointCloud c = random_cloud(gen, 200);
  const auto index = build_index(c);
  for (const auto &p : c.points)
    EXPECT_EQ(index.nearest_distance(p), 0.0);
}

TEST(KdIndex, KnnMatchesBruteForce) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = random_size(gen, 1, 256);
    // Every other trial uses a lattice so that distance ties are frequent.
    const PointCloud c = trial % 2 ? lattice_cloud(gen, n) : random_cloud(gen, n);
    const auto index = build_index(c);
    for (int q = 0; q < 5; ++q) {
      const Point3 query = trial % 2 ? lattice_cloud(gen, 1).points[0] : random_cloud(gen, 1).points[0];
      const std::size_t k = random_size(gen, 1, 12);
      const auto got = index.knn(query, k);
      const auto want = oracle::knn(c.points, query, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].index, want[i].index) << "trial " << trial << " rank " << i;
        EXPECT_EQ(got[i].distance, want[i].distance);
      }
      EXPECT_EQ(index.nearest_distance(query), oracle::nearest(c.points, query));
    }
  }
}

TEST(Fps, EmptyCloudIsQueryError) {
  EXPECT_THROW(furthest_point_sample(PointCloud{}, 3, 0), QueryError);
}

TEST(Fps, FullCountSelectsEveryIndex) {
  std::mt19937_64 gen(6);
  const PointCloud c = random_cloud(gen, 20);
  const FpsResult r = furthest_point_sample(c, 20, 99);
  EXPECT_EQ(std::set<std::size_t>(r.indices.begin(), r.indices.end()).size(), 20u);
  EXPECT_EQ(furthest_point_sample(c, 500, 99).indices.size(), 20u);
}

TEST(Fps, CollinearExample) {
  const PointCloud c({Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0), Point3(10, 0, 0)});
  const FpsResult r = furthest_point_sample(c, 2, seed_with_start(4, 0));
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{0, 3}));
}

TEST(Fps, MatchesGreedyOracle) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = random_size(gen, 1, 64);
    const PointCloud c = trial % 3 == 0 ? lattice_cloud(gen, n, 3) : random_cloud(gen, n);
    const std::size_t count = random_size(gen, 1, n);
    const std::uint64_t seed = gen();
    const FpsResult r = furthest_point_sample(c, count, seed);
    EXPECT_EQ(r.indices, oracle::fps(c.points, count, fps_start_index(n, seed))) << "trial " << trial;
  }
}

TEST(Fps, Deterministic) {
  std::mt19937_64 gen(2);
  const PointCloud c = random_cloud(gen, 64);
  EXPECT_EQ(furthest_point_sample(c, 16, 5).indices, furthest_point_sample(c, 16, 5).indices);
}

TEST(Fps, MinimumPairwiseDistanceNonIncreasingInCount) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const PointCloud c = random_cloud(gen, 64);
    const std::uint64_t seed = gen();
    double previous = INFINITY;
    for (std::size_t count = 2; count <= 64; ++count) {
      const double spread = min_pairwise(c, furthest_point_sample(c, count, seed).indices);
      EXPECT_LE(spread, previous);
      previous = spread;
    }
  }
}
