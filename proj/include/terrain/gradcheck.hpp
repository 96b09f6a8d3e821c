#ifndef TERRAIN_GRADCHECK_HPP
#define TERRAIN_GRADCHECK_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "terrain/model.hpp"

namespace terrain {

struct GradCheckOptions {
  ModelConfig model = ModelConfig::tiny();
  std::size_t draws = 20;
  std::uint64_t seed = 0;
  double step = 1e-5;
  /// Denominator floor for the relative error, so that entries whose true
  /// gradient is zero compare on an absolute scale.
  double floor = 1e-5;
  double threshold = 1e-3;
  /// Test hook: perturb the analytic gradient of this tensor.
  std::optional<std::string> corrupt_tensor;
};

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Entries whose +-step perturbation flipped a ReLU, argmax, nearest
  /// neighbour or mask decision; finite differences are meaningless there.
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

/// Random tiny scene for one draw: input and target clouds plus a mask that
/// covers part of the target area so both penalty weights occur.
TrainingSample gradcheck_sample(std::uint64_t seed);

/// Initialized weights with randomized biases and norm gains.
ModelParams<double> gradcheck_params(const ModelConfig &cfg, std::uint64_t seed);

/// Loss terms exercised during the check (masked penalty and spread term active).
LossConfig gradcheck_loss();

GradCheckReport gradient_check(const GradCheckOptions &options);

} // namespace terrain

#endif // TERRAIN_GRADCHECK_HPP
