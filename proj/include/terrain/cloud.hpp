#ifndef TERRAIN_CLOUD_HPP
#define TERRAIN_CLOUD_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "terrain/error.hpp"

namespace terrain {

using Point3 = Eigen::Vector3f;
using LabelSet = std::set<std::uint32_t>;

/// Row-per-point coordinate matrix used by every numeric kernel.
template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Ordered 3D points with optional per-point semantic labels.
struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<std::uint32_t>> labels;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts,
                      std::optional<std::vector<std::uint32_t>> lbls = std::nullopt);

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_labels() const { return labels.has_value(); }

  template <typename Scalar>
  PointMatrix<Scalar> matrix() const {
    PointMatrix<Scalar> m(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) = points[i].cast<Scalar>().transpose();
    return m;
  }

  template <typename Derived>
  static PointCloud from_matrix(const Eigen::MatrixBase<Derived> &m) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      cloud.points.emplace_back(m.row(i).transpose().template cast<float>());
    return cloud;
  }

  friend bool operator==(const PointCloud &a, const PointCloud &b);
};

/// Throws ValidationError if any coordinate is NaN or infinite.
void validate_finite(const PointCloud &cloud);

/// Closed axis-aligned box.
struct Aabb {
  Point3 min;
  Point3 max;

  Aabb(const Point3 &lo, const Point3 &hi);
  bool contains(const Point3 &p) const;
};

/// Extent and layout of a dense voxel grid. Linear index = x*ny*nz + y*nz + z.
struct VoxelGridGeometry {
  std::array<std::uint32_t, 3> dims{256, 256, 32};
  Eigen::Vector3d origin{0.0, -25.6, -2.0};
  double resolution = 0.2;

  std::size_t voxel_count() const {
    return std::size_t{dims[0]} * dims[1] * dims[2];
  }
  std::size_t linear_index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return (std::size_t{x} * dims[1] + y) * dims[2] + z;
  }
  Eigen::Vector3d centroid(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return origin + resolution * Eigen::Vector3d(x + 0.5, y + 0.5, z + 0.5);
  }
  Aabb bounds() const;
  void validate() const;
};

struct VoxelGrid {
  VoxelGridGeometry geometry;
  std::vector<bool> occupancy;
  std::optional<std::vector<std::uint16_t>> labels;

  explicit VoxelGrid(VoxelGridGeometry geom);
  VoxelGrid(VoxelGridGeometry geom, std::vector<bool> occ,
            std::optional<std::vector<std::uint16_t>> lbls = std::nullopt);

  std::size_t occupied_count() const;
};

/// One point per occupied voxel (restricted to label_filter when given) at the
/// voxel center, in linear index order.
PointCloud voxel_centroids(const VoxelGrid &grid,
                           const std::optional<LabelSet> &label_filter = std::nullopt);

/// Points whose label is in `labels`, order preserved.
PointCloud filter_by_label(const PointCloud &cloud, const LabelSet &labels);

PointCloud crop(const PointCloud &cloud, const Aabb &box);

/// Concatenates b after a. Labels survive only if both carry them.
PointCloud concatenate(const PointCloud &a, const PointCloud &b);

} // namespace terrain

#endif // TERRAIN_CLOUD_HPP
