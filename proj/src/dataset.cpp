#include "terrain/dataset.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "terrain/cloud_io.hpp"
#include "terrain/sampling.hpp"

namespace terrain {

using json = nlohmann::json;

void DatasetConfig::validate() const {
  if (!(d_y >= 0.0) || !std::isfinite(d_y))
    throw ConfigError("d_y must be a finite non-negative distance");
  if (!(cluster_cell > 0.0))
    throw ConfigError("cluster cell size must be positive");
  if (!(bev_meters_per_pixel > 0.0))
    throw ConfigError("BEV resolution must be positive");
}

PointCloud buffered_difference(const PointCloud &ground_truth, const PointCloud &input, double d_y,
                               bool planar) {
  if (!(d_y >= 0.0))
    throw ConfigError("d_y must be non-negative");
  if (input.empty())
    return ground_truth;

  PointMatrix<float> inputs = input.matrix<float>();
  if (planar)
    inputs.col(2).setZero();
  const KdIndex<float> index(std::move(inputs));

  PointCloud out;
  if (ground_truth.labels)
    out.labels.emplace();
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    Point3 g = ground_truth.points[i];
    if (planar)
      g.z() = 0.0f;
    if (index.nearest_distance(g) >= d_y) {
      out.points.push_back(ground_truth.points[i]);
      if (ground_truth.labels)
        out.labels->push_back((*ground_truth.labels)[i]);
    }
  }
  return out;
}

TrainingSample build_sample(const PointCloud &scan, const VoxelGrid &grid, const DatasetConfig &cfg,
                            const std::optional<BevMaskSet> &masks, std::string source_id,
                            std::uint64_t seed) {
  cfg.validate();
  if (!scan.labels)
    throw ConfigError("build_sample needs a labeled scan");
  if (!grid.labels)
    throw ConfigError("build_sample needs a labeled voxel grid");

  const Aabb box = cfg.crop_box.value_or(grid.geometry.bounds());
  PointCloud road = crop(filter_by_label(scan, cfg.road_labels), box);
  road.labels.reset();
  if (road.empty())
    throw SampleRejected("scan " + source_id + " has no road points inside the crop box");

  const PointCloud full = voxel_centroids(grid, cfg.road_labels);
  PointCloud target = buffered_difference(full, road, cfg.d_y, cfg.planar_buffer);
  if (target.empty())
    throw SampleRejected("scan " + source_id + " has no road beyond the input buffer");

  TrainingSample sample;
  if (masks) {
    masks->validate();
    sample.masks = *masks;
  } else {
    sample.masks = fallback_cluster_masks(target, cfg.cluster_cell,
                                          BevProjection::covering(box, cfg.bev_meters_per_pixel));
  }
  sample.input = std::move(road);
  sample.target = std::move(target);
  sample.d_y = cfg.d_y;
  sample.seed = seed;
  sample.source_id = std::move(source_id);
  sample.voxel_resolution = grid.geometry.resolution;
  return sample;
}

SceneKind parse_scene_kind(const std::string &name) {
  if (name == "t-intersection")
    return SceneKind::TIntersection;
  if (name == "l-corner")
    return SceneKind::LCorner;
  if (name == "straight")
    return SceneKind::Straight;
  throw ConfigError("unknown scene kind '" + name + "' (expected t-intersection, l-corner or straight)");
}

std::string to_string(SceneKind kind) {
  switch (kind) {
  case SceneKind::TIntersection:
    return "t-intersection";
  case SceneKind::LCorner:
    return "l-corner";
  case SceneKind::Straight:
    return "straight";
  }
  return "unknown";
}

namespace {
constexpr const char *kManifest = "manifest.json";
constexpr const char *kInputFile = "input.tepc";
constexpr const char *kTargetFile = "target.tepc";
constexpr const char *kMasksFile = "masks.json";
} // namespace

void write_sample(const TrainingSample &sample, const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create sample directory " + dir.string() + ": " + ec.message());
  const json manifest = {
      {"version", kSampleVersion},
      {"d_y", sample.d_y},
      {"seed", sample.seed},
      {"source_id", sample.source_id},
      {"voxel_resolution", sample.voxel_resolution},
      {"files", {{"input", kInputFile}, {"target", kTargetFile}, {"masks", kMasksFile}}},
  };
  write_native_cloud(sample.input, dir / kInputFile);
  write_native_cloud(sample.target, dir / kTargetFile);
  write_masks(sample.masks, dir / kMasksFile);
  detail::write_file(dir / kManifest, manifest.dump(1) + "\n");
}

TrainingSample read_sample(const std::filesystem::path &dir) {
  const auto manifest_path = dir / kManifest;
  if (!std::filesystem::exists(manifest_path))
    throw FormatError(dir.string() + ": missing " + kManifest);
  TrainingSample sample;
  std::string input_name, target_name, masks_name;
  try {
    const json m = json::parse(detail::read_file(manifest_path));
    const int version = m.at("version").get<int>();
    if (version != kSampleVersion)
      throw FormatError(dir.string() + ": sample version " + std::to_string(version) +
                        " (expected " + std::to_string(kSampleVersion) + ")");
    sample.d_y = m.at("d_y").get<double>();
    sample.seed = m.at("seed").get<std::uint64_t>();
    sample.source_id = m.at("source_id").get<std::string>();
    sample.voxel_resolution = m.value("voxel_resolution", 0.2);
    const auto &files = m.at("files");
    input_name = files.at("input").get<std::string>();
    target_name = files.at("target").get<std::string>();
    masks_name = files.at("masks").get<std::string>();
  } catch (const json::exception &e) {
    throw FormatError(dir.string() + ": bad manifest: " + e.what());
  }
  for (const auto &name : {input_name, target_name, masks_name})
    if (!std::filesystem::exists(dir / name))
      throw FormatError(dir.string() + ": manifest names missing file " + name);
  sample.input = read_native_cloud(dir / input_name);
  sample.target = read_native_cloud(dir / target_name);
  sample.masks = read_masks(dir / masks_name);
  return sample;
}

} // namespace terrain
