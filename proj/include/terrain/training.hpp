#ifndef TERRAIN_TRAINING_HPP
#define TERRAIN_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "terrain/model.hpp"

namespace terrain {

struct TrainState {
  ModelParams<float> params;
  ModelParams<float> adam_m; // first moments
  ModelParams<float> adam_v; // second moments
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  /// Freshly initialized parameters with zero moments.
  static TrainState initial(const ModelConfig &cfg, std::uint64_t seed);
};

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Drives the per-step sample choice.
  std::uint64_t seed = 0;
};

struct TrainResult {
  TrainState state;
  /// Loss before each completed update.
  std::vector<double> loss_trace;
  bool diverged = false;
  std::string diagnostic;
};

using TrainProgress = std::function<void(std::uint64_t step, double loss)>;

/**
 * Adam on one uniformly drawn sample per step. Each sample's proxy graph is
 * built once from its own seed. On a non-finite loss or gradient the run
 * stops and the returned state is the last one with finite values.
 */
TrainResult train(const std::vector<TrainingSample> &dataset, TrainState state, const LossConfig &loss_cfg,
                  const TrainOptions &options, const TrainProgress &progress = {});

/// Loss of the current parameters on one sample (no update).
double sample_loss(const TrainingSample &sample, const ModelParams<float> &params, const LossConfig &loss_cfg);

// Checkpoint layout, little-endian:
//   "TEMD", u16 version, 7 x u32 config fields,
//   u32 tensor count, tensors, u32 moment count, moments, u64 step, u64 seed.
// A tensor is u32 name length, name bytes, u32 rank, rank x u32 dims, f32 data
// (column-major).
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState &state, const std::filesystem::path &path);

/// Throws ShapeError naming the first tensor whose shape disagrees with the
/// stored config, or with `expected` when given.
TrainState load_checkpoint(const std::filesystem::path &path, const std::optional<ModelConfig> &expected = std::nullopt);

/// Throws ShapeError naming the first tensor of `params` that `cfg` would shape differently.
void check_compatible(const ModelParams<float> &params, const ModelConfig &cfg);

} // namespace terrain

#endif // TERRAIN_TRAINING_HPP
