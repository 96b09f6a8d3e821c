#include <algorithm>
#include <cmath>
#include <random>

#include "terrain/dataset.hpp"
#include "terrain/detail/random.hpp"

namespace terrain {

namespace {

using detail::uniform;
using detail::uniform01;

bool inside_any(const std::vector<Rect2> &rects, const Eigen::Vector2d &p) {
  return std::any_of(rects.begin(), rects.end(), [&](const Rect2 &r) { return r.contains(p); });
}

// Parameter interval of a + t(b - a), t in [0, 1], inside a closed rectangle.
std::optional<std::pair<double, double>> clip(const Rect2 &r, const Eigen::Vector2d &a, const Eigen::Vector2d &b) {
  double t0 = 0.0, t1 = 1.0;
  const Eigen::Vector2d d = b - a;
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (a[k] < r.min[k] || a[k] > r.max[k])
        return std::nullopt;
      continue;
    }
    double lo = (r.min[k] - a[k]) / d[k];
    double hi = (r.max[k] - a[k]) / d[k];
    if (lo > hi)
      std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1)
      return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

} // namespace

void SynthParams::validate() const {
  geometry.validate();
  if (!(road_width > 0.0) || !(arm_length > 0.0) || !(branch_length > 0.0) || margin < 0.0)
    throw ConfigError("synthetic road dimensions must be positive");
  if (!(sensor_range > 0.0) || !(scan_density > 0.0) || wall_density < 0.0 || ground_noise < 0.0)
    throw ConfigError("synthetic sensor parameters must be positive");
  const double w = geometry.dims[0] * geometry.resolution;
  const double h = geometry.dims[1] * geometry.resolution;
  if (margin + arm_length > w || margin + branch_length > h || margin + road_width > std::min(w, h))
    throw ConfigError("synthetic road layout does not fit the voxel grid");
}

std::vector<Rect2> scene_layout(SceneKind kind, const SynthParams &p) {
  const Eigen::Vector2d o = p.geometry.origin.head<2>() + Eigen::Vector2d::Constant(p.margin);
  const double w = p.road_width;
  const Rect2 main{o, o + Eigen::Vector2d(p.arm_length, w)};
  switch (kind) {
  case SceneKind::Straight:
    return {main};
  case SceneKind::LCorner: {
    const double x1 = o.x() + p.arm_length;
    return {main, Rect2{{x1 - w, o.y()}, {x1, o.y() + p.branch_length}}};
  }
  case SceneKind::TIntersection: {
    const double xc = o.x() + 0.5 * p.arm_length;
    return {main, Rect2{{xc - 0.5 * w, o.y()}, {xc + 0.5 * w, o.y() + p.branch_length}}};
  }
  }
  throw ConfigError("unknown scene kind");
}

Eigen::Vector2d scene_sensor(const SynthParams &p) {
  if (p.sensor)
    return *p.sensor;
  return p.geometry.origin.head<2>() + Eigen::Vector2d::Constant(p.margin + 0.5 * p.road_width);
}

bool segment_inside(const std::vector<Rect2> &rects, const Eigen::Vector2d &a, const Eigen::Vector2d &b) {
  std::vector<std::pair<double, double>> spans;
  for (const auto &r : rects)
    if (auto s = clip(r, a, b))
      spans.push_back(*s);
  std::sort(spans.begin(), spans.end());
  double covered = 0.0;
  for (const auto &[t0, t1] : spans) {
    if (t0 > covered)
      return false;
    covered = std::max(covered, t1);
  }
  return covered >= 1.0;
}

SynthScene synth_scene(SceneKind kind, const SynthParams &params, std::uint64_t seed) {
  params.validate();
  const auto rects = scene_layout(kind, params);
  const Eigen::Vector2d sensor = scene_sensor(params);
  if (!inside_any(rects, sensor))
    throw ConfigError("synthetic sensor must stand on the road");
  const auto &geom = params.geometry;

  constexpr std::uint16_t kRoad = 40, kSidewalk = 48, kBuilding = 50;
  const double ground_z = geom.origin.z() + 0.5 * geom.resolution;

  // Ground truth: road voxels in layer 0, a one-voxel sidewalk ring around
  // them and a wall voxel above each sidewalk cell.
  VoxelGrid grid(geom);
  grid.labels.emplace(geom.voxel_count(), std::uint16_t{0});
  auto road_cell = [&](long x, long y) {
    if (x < 0 || y < 0 || x >= long(geom.dims[0]) || y >= long(geom.dims[1]))
      return false;
    const auto c = geom.centroid(std::uint32_t(x), std::uint32_t(y), 0);
    return inside_any(rects, c.head<2>());
  };
  for (std::uint32_t x = 0; x < geom.dims[0]; ++x)
    for (std::uint32_t y = 0; y < geom.dims[1]; ++y) {
      const auto ground = geom.linear_index(x, y, 0);
      if (road_cell(x, y)) {
        grid.occupancy[ground] = true;
        (*grid.labels)[ground] = kRoad;
        continue;
      }
      bool near_road = false;
      for (long dx = -1; dx <= 1 && !near_road; ++dx)
        for (long dy = -1; dy <= 1 && !near_road; ++dy)
          near_road = road_cell(long(x) + dx, long(y) + dy);
      if (!near_road)
        continue;
      grid.occupancy[ground] = true;
      (*grid.labels)[ground] = kSidewalk;
      if (geom.dims[2] > 1) {
        const auto wall = geom.linear_index(x, y, 1);
        grid.occupancy[wall] = true;
        (*grid.labels)[wall] = kBuilding;
      }
    }

  std::mt19937_64 gen(seed);
  SynthScene scene{PointCloud{}, std::move(grid)};
  scene.scan.labels.emplace();
  auto visible = [&](const Eigen::Vector2d &p) {
    return (p - sensor).norm() <= params.sensor_range && segment_inside(rects, sensor, p);
  };

  // Road returns: uniform over the union (rejection from its bounding box).
  Eigen::Vector2d lo = rects.front().min, hi = rects.front().max;
  for (const auto &r : rects) {
    lo = lo.cwiseMin(r.min);
    hi = hi.cwiseMax(r.max);
  }
  double area = 0.0;
  {
    // Union area by inclusion-exclusion over at most two rectangles.
    for (const auto &r : rects)
      area += (r.max - r.min).prod();
    if (rects.size() == 2) {
      const Eigen::Vector2d a = rects[0].min.cwiseMax(rects[1].min);
      const Eigen::Vector2d b = rects[0].max.cwiseMin(rects[1].max);
      if ((b.array() > a.array()).all())
        area -= (b - a).prod();
    }
  }
  const auto road_samples = static_cast<std::size_t>(std::llround(params.scan_density * area));
  for (std::size_t accepted = 0; accepted < road_samples;) {
    const Eigen::Vector2d p(uniform(gen, lo.x(), hi.x()), uniform(gen, lo.y(), hi.y()));
    if (!inside_any(rects, p))
      continue;
    ++accepted;
    const double z = ground_z + uniform(gen, -params.ground_noise, params.ground_noise);
    if (visible(p)) {
      scene.scan.points.emplace_back(Eigen::Vector3d(p.x(), p.y(), z).cast<float>());
      scene.scan.labels->push_back(kRoad);
    }
  }

  // Wall returns on the boundary of the road union, seen from inside.
  constexpr double kNudge = 1e-6;
  for (const auto &r : rects) {
    const std::array<std::pair<Eigen::Vector2d, Eigen::Vector2d>, 4> edges{{
        {r.min, {r.max.x(), r.min.y()}},
        {{r.max.x(), r.min.y()}, r.max},
        {r.max, {r.min.x(), r.max.y()}},
        {{r.min.x(), r.max.y()}, r.min},
    }};
    const Eigen::Vector2d center = 0.5 * (r.min + r.max);
    for (const auto &[a, b] : edges) {
      const double len = (b - a).norm();
      const auto n = static_cast<std::size_t>(std::llround(params.wall_density * len));
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d p = a + uniform01(gen) * (b - a);
        const double z = ground_z + uniform(gen, 0.2, 2.0);
        const Eigen::Vector2d inward = p + kNudge * (center - p).normalized();
        const Eigen::Vector2d outward = p - kNudge * (center - p).normalized();
        if (inside_any(rects, outward) || !visible(inward))
          continue;
        scene.scan.points.emplace_back(Eigen::Vector3d(p.x(), p.y(), z).cast<float>());
        scene.scan.labels->push_back(kBuilding);
      }
    }
  }
  return scene;
}

} // namespace terrain
