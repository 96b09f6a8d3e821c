#ifndef TERRAIN_RUN_CONFIG_HPP
#define TERRAIN_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "terrain/dataset.hpp"
#include "terrain/evaluation.hpp"
#include "terrain/objective.hpp"
#include "terrain/training.hpp"

namespace terrain {

struct RunPaths {
  std::filesystem::path data;
  std::filesystem::path out;
  std::filesystem::path checkpoint;

  friend bool operator==(const RunPaths &, const RunPaths &) = default;
};

/// KITTI voxel layout: 256 x 256 x 32 voxels of 0.2 m, x forward from the sensor.
inline const VoxelGridGeometry kKittiGridGeometry{{256, 256, 32}, {0.0, -25.6, -2.0}, 0.2};

struct RunConfig {
  DatasetConfig dataset;
  /// Voxel grid layout assumed for inputs that do not carry their own.
  VoxelGridGeometry grid = kKittiGridGeometry;
  ModelConfig model;
  LossConfig loss;
  TrainOptions train;
  EvalConfig eval;
  std::uint64_t seed = 0;
  RunPaths paths;

  void validate() const;
};

/**
 * INI text with sections dataset, grid, model, loss, train, eval and paths plus a
 * top-level `seed`. Keys are "section.key"; unknown keys throw ConfigError.
 */
RunConfig parse_run_config(const std::string &text, const std::string &origin = "config",
                           std::set<std::string> *keys_seen = nullptr);
RunConfig load_run_config(const std::filesystem::path &path, std::set<std::string> *keys_seen = nullptr);

/// Applies one "section.key" = value override.
void apply_setting(RunConfig &cfg, const std::string &key, const std::string &value);

/// Every recognised key, in file order.
std::vector<std::string> run_config_keys();

/// Serializes all keys; parse_run_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig &cfg);

} // namespace terrain

#endif // TERRAIN_RUN_CONFIG_HPP
