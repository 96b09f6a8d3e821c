#ifndef TERRAIN_SAMPLING_HPP
#define TERRAIN_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "terrain/cloud.hpp"

namespace terrain {

struct Neighbor {
  std::size_t index;
  double distance;

  friend bool operator==(const Neighbor &, const Neighbor &) = default;
};

namespace detail {

template <typename Scalar>
double squared_distance(const Eigen::Vector3d &q, const PointMatrix<Scalar> &pts, Eigen::Index i) {
  const double dx = q.x() - static_cast<double>(pts(i, 0));
  const double dy = q.y() - static_cast<double>(pts(i, 1));
  const double dz = q.z() - static_cast<double>(pts(i, 2));
  return dx * dx + dy * dy + dz * dz;
}

/// (squared distance, index) ordering shared by every query.
struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate &o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

} // namespace detail

/**
 * Balanced k-d tree over an immutable point set.
 *
 * Queries are exact: results match a brute-force scan, with distance ties
 * broken by the lower point index. Distances are evaluated in double
 * precision regardless of Scalar.
 */
template <typename Scalar>
class KdIndex {
public:
  static constexpr std::size_t kLeafSize = 8;

  KdIndex() = default;

  explicit KdIndex(PointMatrix<Scalar> points) : points_(std::move(points)) {
    order_.resize(static_cast<std::size_t>(points_.rows()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty())
      build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  const PointMatrix<Scalar> &points() const { return points_; }

  /// min(k, size()) nearest points, ascending by distance then index.
  template <typename Derived>
  std::vector<Neighbor> knn(const Eigen::MatrixBase<Derived> &query, std::size_t k) const {
    require_nonempty();
    if (k == 0)
      throw QueryError("knn requires k >= 1");
    const Eigen::Vector3d q = query.template cast<double>();
    std::vector<detail::Candidate> heap;
    heap.reserve(std::min(k, size()) + 1);
    search(0, q, std::min(k, size()), heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const auto &c : heap)
      out.push_back({c.index, std::sqrt(c.d2)});
    return out;
  }

  template <typename Derived>
  Neighbor nearest(const Eigen::MatrixBase<Derived> &query) const {
    return knn(query, 1).front();
  }

  template <typename Derived>
  double nearest_distance(const Eigen::MatrixBase<Derived> &query) const {
    return nearest(query).distance;
  }

private:
  struct Node {
    std::size_t begin, end;
    int axis = -1; // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  void require_nonempty() const {
    if (empty())
      throw QueryError("query against an empty point index");
  }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize)
      return id;

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::Vector3d p = points_.row(static_cast<Eigen::Index>(order_[i])).transpose().template cast<double>();
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    auto key = [&](std::size_t idx) { return static_cast<double>(points_(static_cast<Eigen::Index>(idx), axis)); };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });

    nodes_[id].axis = axis;
    nodes_[id].split = key(order_[mid]);
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void offer(std::vector<detail::Candidate> &heap, std::size_t k, detail::Candidate c) const {
    if (heap.size() < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end());
    } else if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(std::size_t id, const Eigen::Vector3d &q, std::size_t k,
              std::vector<detail::Candidate> &heap) const {
    const Node &node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        offer(heap, k, {detail::squared_distance(q, points_, static_cast<Eigen::Index>(idx)), idx});
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    search(near, q, k, heap);
    // Equal bounds are still visited so that index tie-breaks stay exact.
    if (heap.size() < k || diff * diff <= heap.front().d2)
      search(far, q, k, heap);
  }

  PointMatrix<Scalar> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Builds an index over a cloud's coordinates (stored as float).
KdIndex<float> build_index(const PointCloud &cloud);

struct FpsResult {
  std::vector<std::size_t> indices;
  std::size_t count = 0;
};

/// Index of the first furthest-point sample for a cloud of n points.
inline std::size_t fps_start_index(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return static_cast<std::size_t>(gen() % n);
}

/**
 * Greedy furthest point sampling.
 *
 * The first index comes from the seed; each later pick maximizes the squared
 * distance to the nearest already-selected point, lowest index on ties.
 * Returns min(count, n) unique indices.
 */
template <typename Scalar>
FpsResult furthest_point_sample(const PointMatrix<Scalar> &pts, std::size_t count, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(pts.rows());
  if (n == 0)
    throw QueryError("furthest point sampling of an empty cloud");
  FpsResult result;
  result.count = count;
  const std::size_t m = std::min(count, n);
  if (m == 0)
    return result;
  result.indices.reserve(m);

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = fps_start_index(n, seed);
  for (std::size_t s = 0; s < m; ++s) {
    result.indices.push_back(current);
    min_d2[current] = -1.0;
    const Eigen::Vector3d c = pts.row(static_cast<Eigen::Index>(current)).transpose().template cast<double>();
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0)
        continue;
      min_d2[i] = std::min(min_d2[i], detail::squared_distance(c, pts, static_cast<Eigen::Index>(i)));
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return result;
}

FpsResult furthest_point_sample(const PointCloud &cloud, std::size_t count, std::uint64_t seed);

} // namespace terrain

#endif // TERRAIN_SAMPLING_HPP
