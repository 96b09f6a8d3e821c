#ifndef TERRAIN_CLOUD_IO_HPP
#define TERRAIN_CLOUD_IO_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "terrain/cloud.hpp"

namespace terrain {

namespace fs = std::filesystem;

// Native "TEPC" layout:
//   0..3  magic "TEPC"
//   4     version (1)
//   5     flags, bit 0 = labels present
//   6..7  reserved, zero
//   8..11 u32 point count N
//   N * 3 f32 coordinates, then N u32 labels when flagged. All little-endian.
inline constexpr std::uint8_t kNativeCloudVersion = 1;

PointCloud read_native_cloud(const fs::path &path);
void write_native_cloud(const PointCloud &cloud, const fs::path &path);

/// KITTI velodyne scan: 16-byte records (x, y, z, reflectance). Reflectance
/// is dropped.
PointCloud read_kitti_velodyne(const fs::path &path);

/// Attaches the low 16 bits of each 32-bit label record; the high bits carry
/// the instance id.
PointCloud read_kitti_labels(const fs::path &path, const PointCloud &cloud);

/// Packed occupancy bits (MSB first) plus optional 16-bit voxel labels.
VoxelGrid read_kitti_voxels(const fs::path &bin_path, const std::optional<fs::path> &label_path,
                            const VoxelGridGeometry &geometry);
void write_kitti_voxels(const VoxelGrid &grid, const fs::path &bin_path,
                        const std::optional<fs::path> &label_path);

using Rgb = std::array<std::uint8_t, 3>;

namespace colors {
inline constexpr Rgb kInput{0, 0, 255};
inline constexpr Rgb kPrediction{0, 255, 0};
inline constexpr Rgb kGroundTruth{0, 128, 128};
} // namespace colors

struct ColoredCloud {
  const PointCloud *cloud;
  Rgb color;
};

/// ASCII PLY with x/y/z and uchar red/green/blue; vertices in layer order.
void write_ply(const std::vector<ColoredCloud> &layers, const fs::path &path);

namespace detail {
std::string read_file(const fs::path &path);
void write_file(const fs::path &path, const std::string &bytes);
} // namespace detail

} // namespace terrain

#endif // TERRAIN_CLOUD_IO_HPP
