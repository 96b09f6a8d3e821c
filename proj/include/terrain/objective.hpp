#ifndef TERRAIN_OBJECTIVE_HPP
#define TERRAIN_OBJECTIVE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "terrain/bev.hpp"
#include "terrain/cloud.hpp"
#include "terrain/sampling.hpp"

namespace terrain {

struct LossConfig {
  /// Multiplier on the prediction-to-target term of points outside the masks.
  double delta = 5.0;
  double alpha = 1.0;
  double beta = 1.0;
  double spread_weight = 0.0;
  std::size_t spread_k = 4;
  double spread_margin = 0.25;

  void validate() const;
};

/// Per-point nearest-neighbor terms of the symmetric chamfer distance.
struct ChamferTerms {
  double value = 0.0;
  std::vector<double> pred_to_target; // min_g ||p - g|| for each p
  std::vector<std::size_t> pred_match;
  std::vector<double> target_to_pred; // min_p ||g - p|| for each g
  std::vector<std::size_t> target_match;
};

namespace detail {

template <typename T>
double mean(const std::vector<T> &v) {
  double sum = 0.0;
  for (const auto &x : v)
    sum += x;
  return sum / static_cast<double>(v.size());
}

template <typename SP, typename SG>
void nearest_terms(const PointMatrix<SP> &from, const KdIndex<SG> &to, std::vector<double> &dist,
                   std::vector<std::size_t> &match) {
  dist.resize(static_cast<std::size_t>(from.rows()));
  match.resize(dist.size());
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    const Neighbor nn = to.nearest(from.row(i).transpose());
    dist[static_cast<std::size_t>(i)] = nn.distance;
    match[static_cast<std::size_t>(i)] = nn.index;
  }
}

} // namespace detail

/**
 * Symmetric chamfer distance with unsquared Euclidean terms:
 * mean_p min_g ||p - g|| + mean_g min_p ||g - p||.
 */
template <typename SP, typename SG>
ChamferTerms chamfer_terms(const PointMatrix<SP> &pred, const PointMatrix<SG> &target) {
  if (pred.rows() == 0 || target.rows() == 0)
    throw DomainError("chamfer distance of an empty point set");
  ChamferTerms t;
  const KdIndex<SG> target_index(target);
  const KdIndex<SP> pred_index(pred);
  detail::nearest_terms(pred, target_index, t.pred_to_target, t.pred_match);
  detail::nearest_terms(target, pred_index, t.target_to_pred, t.target_match);
  t.value = detail::mean(t.pred_to_target) + detail::mean(t.target_to_pred);
  return t;
}

ChamferTerms chamfer(const PointCloud &pred, const PointCloud &target);

struct MaskedChamfer {
  double value = 0.0;
  /// Per-prediction multiplier: delta outside the masks, 1 inside.
  std::vector<double> weights;
  ChamferTerms terms;
};

template <typename SP, typename SG>
MaskedChamfer masked_chamfer(const PointMatrix<SP> &pred, const PointMatrix<SG> &target,
                             const BevMaskSet &masks, const LossConfig &cfg) {
  MaskedChamfer out;
  out.terms = chamfer_terms(pred, target);
  out.weights.resize(static_cast<std::size_t>(pred.rows()));
  double first = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.weights[k] = point_in_masks(masks, pred.row(i).transpose()) ? 1.0 : cfg.delta;
    first += out.weights[k] * out.terms.pred_to_target[k];
  }
  first /= static_cast<double>(pred.rows());
  out.value = cfg.alpha * first + cfg.beta * detail::mean(out.terms.target_to_pred);
  return out;
}

MaskedChamfer masked_chamfer(const PointCloud &pred, const PointCloud &target, const BevMaskSet &masks,
                             const LossConfig &cfg);

struct SpreadTerms {
  double value = 0.0;
  /// For each prediction, its nearest other predictions (at most spread_k).
  std::vector<std::vector<Neighbor>> neighbors;
};

/// spread_weight * mean_p mean_{q in knn(p)} max(0, margin - ||p - q||).
template <typename Scalar>
SpreadTerms spread_terms(const PointMatrix<Scalar> &pred, const LossConfig &cfg) {
  SpreadTerms out;
  const auto n = static_cast<std::size_t>(pred.rows());
  if (cfg.spread_weight == 0.0 || n < 2 || cfg.spread_k == 0)
    return out;
  const KdIndex<Scalar> index(pred);
  out.neighbors.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto nbrs = index.knn(pred.row(static_cast<Eigen::Index>(i)).transpose(), cfg.spread_k + 1);
    auto self = std::find_if(nbrs.begin(), nbrs.end(), [&](const Neighbor &nb) { return nb.index == i; });
    if (self != nbrs.end())
      nbrs.erase(self);
    else
      nbrs.pop_back();
    if (nbrs.size() > cfg.spread_k)
      nbrs.resize(cfg.spread_k);
    double hinge = 0.0;
    for (const auto &nb : nbrs)
      hinge += std::max(0.0, cfg.spread_margin - nb.distance);
    total += hinge / static_cast<double>(nbrs.size());
    out.neighbors[i] = std::move(nbrs);
  }
  out.value = cfg.spread_weight * total / static_cast<double>(n);
  return out;
}

double spread_penalty(const PointCloud &pred, const LossConfig &cfg);

/// Loss value, its gradient with respect to each predicted coordinate, and a
/// fingerprint of the discrete choices (matches, mask hits, neighbor sets)
/// the value was evaluated under.
struct LossEvaluation {
  double value = 0.0;
  double masked = 0.0;
  double spread = 0.0;
  PointMatrix<double> grad;
  std::uint64_t signature = 0;
};

/**
 * masked_chamfer + spread_penalty. Gradients treat nearest-neighbor
 * assignments and mask membership as fixed; a zero-length difference
 * contributes a zero subgradient.
 */
LossEvaluation evaluate_loss(const PointMatrix<double> &pred, const PointMatrix<float> &target,
                             const BevMaskSet &masks, const LossConfig &cfg, bool with_grad = true);

double loss(const PointCloud &pred, const PointCloud &target, const BevMaskSet &masks, const LossConfig &cfg);

// Metrics

using MembershipOracle = std::function<bool(const Point3 &)>;

/// Within rho (inclusive) of any ground-truth point.
MembershipOracle proximity_membership(const PointCloud &ground_truth, double rho);
MembershipOracle mask_membership(const BevMaskSet &masks);
MembershipOracle either_membership(MembershipOracle a, MembershipOracle b);

/// Percentage of predictions the oracle places on ground-truth terrain.
double metric_accuracy(const PointCloud &pred, const MembershipOracle &in_ground_truth);

/// mean_p min_g ||p - g||.
double metric_cd_pt(const PointCloud &pred, const PointCloud &ground_truth);

inline const std::vector<double> kDefaultHistogramEdges{0.4, 0.8, 1.2, 1.6, 2.0};

struct CdHistogram {
  std::vector<double> edges;
  /// edges.size() + 1 entries; bin i covers [edges[i-1], edges[i]) with
  /// edges[-1] = 0, and the last bin collects everything >= edges.back().
  std::vector<double> percentages;
};

/// Distribution of min_p ||g - p|| over ground-truth points g.
CdHistogram metric_cd_histogram(const PointCloud &ground_truth, const PointCloud &pred,
                                const std::vector<double> &edges = kDefaultHistogramEdges);

// Reports

struct SceneMetrics {
  std::string scene_id;
  double acc = 0.0;
  double cd_pt = 0.0;
  CdHistogram histogram;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;
  std::optional<std::string> error;
};

struct MetricReport {
  std::vector<double> edges = kDefaultHistogramEdges;
  std::vector<SceneMetrics> rows; // ordered by scene id

  bool has_errors() const;
};

MetricReport assemble_report(std::vector<SceneMetrics> scenes,
                             const std::vector<double> &edges = kDefaultHistogramEdges);

std::string report_to_json(const MetricReport &report);
/// Plain-text table: scene, acc, cd_pt, then one column per histogram bin.
std::string report_to_table(const MetricReport &report);

/// Rounds percentages to `decimals` so that the rounded values still sum to
/// the rounded total (largest-remainder rounding).
std::vector<double> round_preserving_sum(const std::vector<double> &values, int decimals);

} // namespace terrain

#endif // TERRAIN_OBJECTIVE_HPP
