#ifndef TERRAIN_DATASET_HPP
#define TERRAIN_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "terrain/bev.hpp"
#include "terrain/cloud.hpp"

namespace terrain {

enum class MaskSource { Precomputed, GridCluster };

struct DatasetConfig {
  double d_y = 1.0;
  LabelSet road_labels{40};
  /// Defaults to the voxel grid's extent when unset.
  std::optional<Aabb> crop_box;
  MaskSource mask_source = MaskSource::GridCluster;
  double cluster_cell = 0.5;
  double bev_meters_per_pixel = 0.1;
  /// Measure the buffer in the ground plane instead of in 3D.
  bool planar_buffer = false;

  void validate() const;
};

/// Unit of training and evaluation: road input X, buffered target Y, masks.
struct TrainingSample {
  PointCloud input;
  PointCloud target;
  BevMaskSet masks;
  double d_y = 1.0;
  std::uint64_t seed = 0;
  std::string source_id;
  /// Edge length of the ground-truth voxels behind `target`.
  double voxel_resolution = 0.2;

  friend bool operator==(const TrainingSample &, const TrainingSample &) = default;
};

/// { g in G : min_x ||g - x|| >= d_y }. Returns G unchanged when X is empty.
PointCloud buffered_difference(const PointCloud &ground_truth, const PointCloud &input, double d_y,
                               bool planar = false);

/**
 * Builds a sample from a labeled scan and labeled voxel grid.
 *
 * X = crop(filter_by_label(scan)), G = road voxel centroids,
 * Y = buffered_difference(G, X, d_y). Masks come from `masks` when given,
 * otherwise from fallback_cluster_masks over Y.
 *
 * Throws SampleRejected when X or Y is empty.
 */
TrainingSample build_sample(const PointCloud &scan, const VoxelGrid &grid, const DatasetConfig &cfg,
                            const std::optional<BevMaskSet> &masks = std::nullopt,
                            std::string source_id = {}, std::uint64_t seed = 0);

enum class SceneKind { TIntersection, LCorner, Straight };

SceneKind parse_scene_kind(const std::string &name);
std::string to_string(SceneKind kind);

/// Synthetic road layouts in the grid's xy frame.
struct SynthParams {
  VoxelGridGeometry geometry{{48, 48, 2}, {0.0, 0.0, -0.25}, 0.5};
  double road_width = 3.0;
  double margin = 1.0;
  /// Length of the arm holding the sensor (l-corner) or of the main road.
  double arm_length = 13.0;
  /// Length of the side branch (l-corner, t-intersection).
  double branch_length = 19.0;
  /// Sensor position; defaults to the middle of the road start.
  std::optional<Eigen::Vector2d> sensor;
  double sensor_range = 50.0;
  /// Road returns per square meter before occlusion.
  double scan_density = 10.0;
  /// Wall returns per meter of road boundary before occlusion.
  double wall_density = 2.0;
  double ground_noise = 0.02;

  void validate() const;
};

struct SynthScene {
  PointCloud scan;
  VoxelGrid grid;
};

struct Rect2 {
  Eigen::Vector2d min, max;
  bool contains(const Eigen::Vector2d &p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Road region of a synthetic scene as a union of rectangles.
std::vector<Rect2> scene_layout(SceneKind kind, const SynthParams &params);
Eigen::Vector2d scene_sensor(const SynthParams &params);

/// True when the whole segment a-b stays inside the union of `rects`.
bool segment_inside(const std::vector<Rect2> &rects, const Eigen::Vector2d &a, const Eigen::Vector2d &b);

/**
 * Deterministic synthetic scene. The grid holds every road voxel of the
 * layout (label 40) plus a sidewalk ring (48) and walls (50). The scan keeps
 * only returns visible from the sensor under 2D occlusion by everything
 * outside the road, within sensor range.
 */
SynthScene synth_scene(SceneKind kind, const SynthParams &params, std::uint64_t seed);

inline constexpr int kSampleVersion = 1;

/// Directory with manifest.json, input.tepc, target.tepc and masks.json.
void write_sample(const TrainingSample &sample, const std::filesystem::path &dir);
TrainingSample read_sample(const std::filesystem::path &dir);

} // namespace terrain

#endif // TERRAIN_DATASET_HPP
