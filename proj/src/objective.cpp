#include "terrain/objective.hpp"

#include <cmath>

namespace terrain {

void LossConfig::validate() const {
  if (!(delta >= 1.0))
    throw ConfigError("delta must be >= 1");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(spread_weight >= 0.0))
    throw ConfigError("loss weights must be non-negative");
  if (!(spread_margin >= 0.0))
    throw ConfigError("spread margin must be non-negative");
}

ChamferTerms chamfer(const PointCloud &pred, const PointCloud &target) {
  return chamfer_terms(pred.matrix<float>(), target.matrix<float>());
}

MaskedChamfer masked_chamfer(const PointCloud &pred, const PointCloud &target, const BevMaskSet &masks,
                             const LossConfig &cfg) {
  cfg.validate();
  return masked_chamfer(pred.matrix<float>(), target.matrix<float>(), masks, cfg);
}

double spread_penalty(const PointCloud &pred, const LossConfig &cfg) {
  cfg.validate();
  return spread_terms(pred.matrix<float>(), cfg).value;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
};

void accumulate_direction(PointMatrix<double> &grad, Eigen::Index row, const Eigen::RowVector3d &diff,
                          double coef) {
  const double r = diff.norm();
  if (r > 0.0)
    grad.row(row) += (coef / r) * diff;
}

} // namespace

LossEvaluation evaluate_loss(const PointMatrix<double> &pred, const PointMatrix<float> &target,
                             const BevMaskSet &masks, const LossConfig &cfg, bool with_grad) {
  const MaskedChamfer mc = masked_chamfer(pred, target, masks, cfg);
  const SpreadTerms sp = spread_terms(pred, cfg);

  LossEvaluation ev;
  ev.masked = mc.value;
  ev.spread = sp.value;
  ev.value = mc.value + sp.value;
  if (!std::isfinite(ev.value))
    throw NumericError("loss is not finite (masked chamfer " + std::to_string(mc.value) + ", spread " +
                       std::to_string(sp.value) + ")");

  Fnv1a sig;
  for (auto m : mc.terms.pred_match)
    sig.add(m);
  for (auto m : mc.terms.target_match)
    sig.add(m);
  for (double w : mc.weights)
    sig.add(w == 1.0 ? 1u : 2u);
  for (const auto &nbrs : sp.neighbors)
    for (const auto &nb : nbrs) {
      sig.add(nb.index);
      sig.add(nb.distance < cfg.spread_margin ? 1u : 0u);
    }
  ev.signature = sig.h;

  if (!with_grad)
    return ev;

  const auto n_pred = static_cast<double>(pred.rows());
  const auto n_target = static_cast<double>(target.rows());
  ev.grad = PointMatrix<double>::Zero(pred.rows(), 3);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto g = static_cast<Eigen::Index>(mc.terms.pred_match[k]);
    accumulate_direction(ev.grad, i, pred.row(i) - target.row(g).cast<double>(),
                         cfg.alpha * mc.weights[k] / n_pred);
  }
  for (Eigen::Index j = 0; j < target.rows(); ++j) {
    const auto p = static_cast<Eigen::Index>(mc.terms.target_match[static_cast<std::size_t>(j)]);
    accumulate_direction(ev.grad, p, pred.row(p) - target.row(j).cast<double>(), cfg.beta / n_target);
  }
  for (std::size_t i = 0; i < sp.neighbors.size(); ++i) {
    const auto &nbrs = sp.neighbors[i];
    const double coef = cfg.spread_weight / (n_pred * static_cast<double>(nbrs.size()));
    const auto pi = static_cast<Eigen::Index>(i);
    for (const auto &nb : nbrs) {
      if (!(nb.distance < cfg.spread_margin))
        continue;
      const auto qi = static_cast<Eigen::Index>(nb.index);
      const Eigen::RowVector3d diff = pred.row(pi) - pred.row(qi);
      // d/dp of (margin - ||p - q||) is -(p - q)/||p - q||; opposite for q.
      accumulate_direction(ev.grad, pi, diff, -coef);
      accumulate_direction(ev.grad, qi, diff, coef);
    }
  }
  return ev;
}

double loss(const PointCloud &pred, const PointCloud &target, const BevMaskSet &masks, const LossConfig &cfg) {
  cfg.validate();
  return evaluate_loss(pred.matrix<double>(), target.matrix<float>(), masks, cfg, false).value;
}

MembershipOracle proximity_membership(const PointCloud &ground_truth, double rho) {
  if (ground_truth.empty())
    throw DomainError("proximity membership needs ground-truth points");
  auto index = std::make_shared<KdIndex<float>>(build_index(ground_truth));
  return [index, rho](const Point3 &p) { return index->nearest_distance(p) <= rho; };
}

MembershipOracle mask_membership(const BevMaskSet &masks) {
  return [masks](const Point3 &p) { return point_in_masks(masks, p); };
}

MembershipOracle either_membership(MembershipOracle a, MembershipOracle b) {
  return [a = std::move(a), b = std::move(b)](const Point3 &p) { return a(p) || b(p); };
}

double metric_accuracy(const PointCloud &pred, const MembershipOracle &in_ground_truth) {
  if (pred.empty())
    throw DomainError("accuracy of an empty prediction");
  std::size_t hits = 0;
  for (const auto &p : pred.points)
    hits += in_ground_truth(p) ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

double metric_cd_pt(const PointCloud &pred, const PointCloud &ground_truth) {
  if (pred.empty() || ground_truth.empty())
    throw DomainError("cd_pt of an empty point set");
  const auto index = build_index(ground_truth);
  double sum = 0.0;
  for (const auto &p : pred.points)
    sum += index.nearest_distance(p);
  return sum / static_cast<double>(pred.size());
}

CdHistogram metric_cd_histogram(const PointCloud &ground_truth, const PointCloud &pred,
                                const std::vector<double> &edges) {
  if (pred.empty() || ground_truth.empty())
    throw DomainError("cd histogram of an empty point set");
  if (edges.empty())
    throw ConfigError("histogram needs at least one edge");
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (!(edges[i] > (i == 0 ? 0.0 : edges[i - 1])))
      throw ConfigError("histogram edges must be positive and strictly increasing");

  const auto index = build_index(pred);
  std::vector<std::size_t> counts(edges.size() + 1, 0);
  for (const auto &g : ground_truth.points) {
    const double d = index.nearest_distance(g);
    const auto bin = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin());
    ++counts[bin];
  }
  CdHistogram h;
  h.edges = edges;
  h.percentages.reserve(counts.size());
  for (auto c : counts)
    h.percentages.push_back(100.0 * static_cast<double>(c) / static_cast<double>(ground_truth.size()));
  return h;
}

} // namespace terrain
