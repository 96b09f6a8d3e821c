#include "terrain/evaluation.hpp"

namespace terrain {

Membership parse_membership(const std::string &name) {
  if (name == "either")
    return Membership::Either;
  if (name == "proximity")
    return Membership::Proximity;
  if (name == "mask")
    return Membership::Mask;
  throw ConfigError("unknown membership '" + name + "' (expected either, proximity or mask)");
}

std::string to_string(Membership m) {
  switch (m) {
  case Membership::Either:
    return "either";
  case Membership::Proximity:
    return "proximity";
  case Membership::Mask:
    return "mask";
  }
  return "either";
}

void EvalConfig::validate() const {
  if (!(rho >= 0.0))
    throw ConfigError("eval.rho must be non-negative");
  if (edges.empty())
    throw ConfigError("histogram needs at least one edge");
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (!(edges[i] > (i ? edges[i - 1] : 0.0)))
      throw ConfigError("histogram edges must be positive and strictly increasing");
}

MembershipOracle sample_membership(const TrainingSample &sample, const EvalConfig &cfg) {
  const double rho = cfg.rho > 0.0 ? cfg.rho : sample.voxel_resolution;
  switch (cfg.membership) {
  case Membership::Proximity:
    return proximity_membership(sample.target, rho);
  case Membership::Mask:
    return mask_membership(sample.masks);
  case Membership::Either:
    break;
  }
  return either_membership(proximity_membership(sample.target, rho), mask_membership(sample.masks));
}

SceneMetrics evaluate_scene(const PointCloud &prediction, const TrainingSample &sample, const EvalConfig &cfg) {
  SceneMetrics m;
  m.scene_id = sample.source_id;
  m.n_pred = prediction.points.size();
  m.n_gt = sample.target.points.size();
  m.acc = metric_accuracy(prediction, sample_membership(sample, cfg));
  m.cd_pt = metric_cd_pt(prediction, sample.target);
  m.histogram = metric_cd_histogram(sample.target, prediction, cfg.edges);
  return m;
}

} // namespace terrain
