#ifndef TERRAIN_EVALUATION_HPP
#define TERRAIN_EVALUATION_HPP

#include <string>

#include "terrain/dataset.hpp"
#include "terrain/objective.hpp"

namespace terrain {

enum class Membership { Either, Proximity, Mask };

Membership parse_membership(const std::string &name);
std::string to_string(Membership m);

struct EvalConfig {
  Membership membership = Membership::Either;
  /// Proximity tolerance; 0 means the sample's voxel resolution.
  double rho = 0.0;
  std::vector<double> edges = kDefaultHistogramEdges;

  void validate() const;
};

/// Membership oracle for the accuracy metric on one sample.
MembershipOracle sample_membership(const TrainingSample &sample, const EvalConfig &cfg);

/// acc, cd_pt and histogram of `prediction` against the sample's target.
SceneMetrics evaluate_scene(const PointCloud &prediction, const TrainingSample &sample, const EvalConfig &cfg);

} // namespace terrain

#endif // TERRAIN_EVALUATION_HPP
