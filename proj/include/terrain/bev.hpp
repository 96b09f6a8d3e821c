#ifndef TERRAIN_BEV_HPP
#define TERRAIN_BEV_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "terrain/cloud.hpp"

namespace terrain {

/// Top-down pixel frame: u = (x - origin.x) / mpp, v = (y - origin.y) / mpp.
struct BevProjection {
  Eigen::Vector2d origin_xy{0.0, 0.0};
  double meters_per_pixel = 0.1;
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  Eigen::Vector2d to_pixel(double x, double y) const {
    return {(x - origin_xy.x()) / meters_per_pixel, (y - origin_xy.y()) / meters_per_pixel};
  }
  void validate() const;

  /// Projection covering a box's xy footprint at the given resolution.
  static BevProjection covering(const Aabb &box, double meters_per_pixel);

  friend bool operator==(const BevProjection &, const BevProjection &) = default;
};

/// Closed polygon in pixel coordinates; the last vertex connects to the first.
using Polygon = std::vector<Eigen::Vector2d>;

struct BevMaskSet {
  BevProjection projection;
  std::vector<Polygon> polygons;

  /// Every polygon needs >= 3 vertices and nonzero area.
  void validate() const;

  friend bool operator==(const BevMaskSet &, const BevMaskSet &) = default;
};

double signed_area(const Polygon &poly);

/// Even-odd test against a single polygon; points on an edge count as inside.
bool point_in_polygon(const Polygon &poly, const Eigen::Vector2d &uv);

/// True when (p.x, p.y) projects inside any mask polygon. z is ignored.
template <typename Derived>
bool point_in_masks(const BevMaskSet &masks, const Eigen::MatrixBase<Derived> &p) {
  const Eigen::Vector2d uv = masks.projection.to_pixel(static_cast<double>(p(0)), static_cast<double>(p(1)));
  for (const auto &poly : masks.polygons)
    if (point_in_polygon(poly, uv))
      return true;
  return false;
}

/**
 * Mask fallback for scenes without external segmentation: rasterize Y onto
 * square cells of `cell` meters anchored at the projection origin, label
 * 8-connected components, dilate each by one cell and trace its outer
 * boundary. Holes are filled; a component pinched at a corner yields one
 * polygon per lobe.
 */
BevMaskSet fallback_cluster_masks(const PointCloud &targets, double cell, const BevProjection &projection);

std::string masks_to_json(const BevMaskSet &masks);
BevMaskSet masks_from_json(const std::string &text);
void write_masks(const BevMaskSet &masks, const std::filesystem::path &path);
BevMaskSet read_masks(const std::filesystem::path &path);

} // namespace terrain

#endif // TERRAIN_BEV_HPP
