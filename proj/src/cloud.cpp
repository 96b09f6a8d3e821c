#include "terrain/cloud.hpp"

#include <cmath>
#include <string>

namespace terrain {

PointCloud::PointCloud(std::vector<Point3> pts,
                       std::optional<std::vector<std::uint32_t>> lbls)
    : points(std::move(pts)), labels(std::move(lbls)) {
  if (labels && labels->size() != points.size())
    throw ConfigError("label count " + std::to_string(labels->size()) +
                      " does not match point count " + std::to_string(points.size()));
}

bool operator==(const PointCloud &a, const PointCloud &b) {
  if (a.points.size() != b.points.size() || a.labels != b.labels)
    return false;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    if (a.points[i] != b.points[i])
      return false;
  return true;
}

void validate_finite(const PointCloud &cloud) {
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    if (!cloud.points[i].allFinite())
      throw ValidationError("non-finite coordinate at point " + std::to_string(i));
}

Aabb::Aabb(const Point3 &lo, const Point3 &hi) : min(lo), max(hi) {
  if ((lo.array() > hi.array()).any())
    throw ConfigError("box min exceeds max");
}

bool Aabb::contains(const Point3 &p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

Aabb VoxelGridGeometry::bounds() const {
  const Eigen::Vector3d extent(dims[0], dims[1], dims[2]);
  const Eigen::Vector3d hi = origin + resolution * extent;
  return Aabb(origin.cast<float>(), hi.cast<float>());
}

void VoxelGridGeometry::validate() const {
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0)
    throw ConfigError("voxel grid dims must be positive");
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw ConfigError("voxel resolution must be positive");
  if (!origin.allFinite())
    throw ConfigError("voxel origin must be finite");
}

VoxelGrid::VoxelGrid(VoxelGridGeometry geom)
    : geometry(geom), occupancy(geom.voxel_count(), false) {
  geometry.validate();
}

VoxelGrid::VoxelGrid(VoxelGridGeometry geom, std::vector<bool> occ,
                     std::optional<std::vector<std::uint16_t>> lbls)
    : geometry(geom), occupancy(std::move(occ)), labels(std::move(lbls)) {
  geometry.validate();
  if (occupancy.size() != geometry.voxel_count())
    throw ConfigError("occupancy length does not match grid dims");
  if (labels && labels->size() != geometry.voxel_count())
    throw ConfigError("voxel label length does not match grid dims");
}

std::size_t VoxelGrid::occupied_count() const {
  std::size_t n = 0;
  for (bool b : occupancy)
    n += b ? 1 : 0;
  return n;
}

PointCloud voxel_centroids(const VoxelGrid &grid, const std::optional<LabelSet> &label_filter) {
  if (label_filter && !grid.labels)
    throw ConfigError("label filter requested on an unlabeled voxel grid");
  const auto &g = grid.geometry;
  PointCloud out;
  std::size_t idx = 0;
  for (std::uint32_t x = 0; x < g.dims[0]; ++x)
    for (std::uint32_t y = 0; y < g.dims[1]; ++y)
      for (std::uint32_t z = 0; z < g.dims[2]; ++z, ++idx) {
        if (!grid.occupancy[idx])
          continue;
        if (label_filter && !label_filter->contains((*grid.labels)[idx]))
          continue;
        out.points.emplace_back(g.centroid(x, y, z).cast<float>());
      }
  return out;
}

PointCloud filter_by_label(const PointCloud &cloud, const LabelSet &labels) {
  if (!cloud.labels)
    throw ConfigError("label filter requested on an unlabeled cloud");
  PointCloud out;
  out.labels.emplace();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto label = (*cloud.labels)[i];
    if (labels.contains(label)) {
      out.points.push_back(cloud.points[i]);
      out.labels->push_back(label);
    }
  }
  return out;
}

PointCloud crop(const PointCloud &cloud, const Aabb &box) {
  PointCloud out;
  if (cloud.labels)
    out.labels.emplace();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!box.contains(cloud.points[i]))
      continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.labels)
      out.labels->push_back((*cloud.labels)[i]);
  }
  return out;
}

PointCloud concatenate(const PointCloud &a, const PointCloud &b) {
  PointCloud out;
  out.points.reserve(a.size() + b.size());
  out.points.insert(out.points.end(), a.points.begin(), a.points.end());
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  if (a.labels && b.labels) {
    out.labels = *a.labels;
    out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
  }
  return out;
}

} // namespace terrain
