#ifndef TERRAIN_TESTS_SUPPORT_HPP
#define TERRAIN_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "terrain/bev.hpp"
#include "terrain/cloud.hpp"
#include "terrain/detail/random.hpp"

namespace terrain::test {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("terrain-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const fs::path &path() const { return path_; }
  fs::path operator/(const std::string &name) const { return path_ / name; }

private:
  fs::path path_;
};

inline PointCloud random_cloud(std::mt19937_64 &gen, std::size_t n, float extent = 10.0f) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.emplace_back(static_cast<float>(detail::uniform(gen, -extent, extent)),
                          static_cast<float>(detail::uniform(gen, -extent, extent)),
                          static_cast<float>(detail::uniform(gen, -extent, extent)));
  return c;
}

/// Points snapped to a coarse lattice so that exact distance ties occur.
inline PointCloud lattice_cloud(std::mt19937_64 &gen, std::size_t n, int span = 4) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.emplace_back(static_cast<float>(gen() % span), static_cast<float>(gen() % span),
                          static_cast<float>(gen() % span));
  return c;
}

inline std::size_t random_size(std::mt19937_64 &gen, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(gen() % (hi - lo + 1));
}

/// Axis-aligned square mask in world coordinates over a 0.1 m/pixel projection.
inline BevMaskSet square_mask(double x0, double y0, double x1, double y1) {
  BevMaskSet m;
  m.projection.origin_xy = {-20.0, -20.0};
  m.projection.meters_per_pixel = 0.1;
  m.projection.width = 400;
  m.projection.height = 400;
  const auto a = m.projection.to_pixel(x0, y0);
  const auto b = m.projection.to_pixel(x1, y1);
  m.polygons.push_back({{a.x(), a.y()}, {b.x(), a.y()}, {b.x(), b.y()}, {a.x(), b.y()}});
  return m;
}

// Brute-force oracles. Plain double loops over the raw float coordinates.
namespace oracle {

inline double dist2(const Point3 &a, const Point3 &b) {
  const double dx = static_cast<double>(a.x()) - static_cast<double>(b.x());
  const double dy = static_cast<double>(a.y()) - static_cast<double>(b.y());
  const double dz = static_cast<double>(a.z()) - static_cast<double>(b.z());
  return dx * dx + dy * dy + dz * dz;
}

inline double dist(const Point3 &a, const Point3 &b) { return std::sqrt(dist2(a, b)); }

inline double nearest(const std::vector<Point3> &set, const Point3 &q) {
  double best = INFINITY;
  for (const auto &p : set)
    best = std::min(best, dist(p, q));
  return best;
}

struct Hit {
  std::size_t index;
  double distance;
};

inline std::vector<Hit> knn(const std::vector<Point3> &set, const Point3 &q, std::size_t k) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> d(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    d[i] = dist2(set[i], q);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  std::vector<Hit> out;
  for (std::size_t i = 0; i < std::min(k, set.size()); ++i)
    out.push_back({order[i], std::sqrt(d[order[i]])});
  return out;
}

/// Greedy FPS recomputing every minimum from scratch each round.
inline std::vector<std::size_t> fps(const std::vector<Point3> &set, std::size_t count, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  std::vector<bool> taken(set.size(), false);
  taken[start] = true;
  while (chosen.size() < std::min(count, set.size())) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (taken[i])
        continue;
      double m = INFINITY;
      for (auto c : chosen)
        m = std::min(m, dist2(set[i], set[c]));
      if (m > best_d) {
        best_d = m;
        best = i;
      }
    }
    chosen.push_back(best);
    taken[best] = true;
  }
  return chosen;
}

inline double one_sided(const std::vector<Point3> &from, const std::vector<Point3> &to) {
  double sum = 0.0;
  for (const auto &p : from)
    sum += nearest(to, p);
  return sum / static_cast<double>(from.size());
}

inline double chamfer(const std::vector<Point3> &p, const std::vector<Point3> &g) {
  return one_sided(p, g) + one_sided(g, p);
}

inline std::vector<double> histogram(const std::vector<Point3> &gt, const std::vector<Point3> &pred,
                                     const std::vector<double> &edges) {
  std::vector<double> counts(edges.size() + 1, 0.0);
  for (const auto &g : gt) {
    const double d = nearest(pred, g);
    std::size_t bin = edges.size();
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (d < edges[e]) {
        bin = e;
        break;
      }
    counts[bin] += 1.0;
  }
  for (auto &c : counts)
    c = 100.0 * c / static_cast<double>(gt.size());
  return counts;
}

inline std::vector<Point3> buffered_difference(const std::vector<Point3> &g, const std::vector<Point3> &x,
                                               double d_y) {
  std::vector<Point3> out;
  for (const auto &p : g) {
    bool keep = true;
    for (const auto &q : x)
      if (dist(p, q) < d_y) {
        keep = false;
        break;
      }
    if (keep)
      out.push_back(p);
  }
  return out;
}

} // namespace oracle

inline bool relative_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

} // namespace terrain::test

#endif // TERRAIN_TESTS_SUPPORT_HPP
