#include "terrain/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "terrain/detail/random.hpp"

namespace terrain {

TrainingSample gradcheck_sample(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  TrainingSample s;
  s.seed = seed;
  s.source_id = "gradcheck-" + std::to_string(seed);
  s.voxel_resolution = 0.5;
  for (int i = 0; i < 40; ++i)
    s.input.points.emplace_back(static_cast<float>(detail::uniform(gen, 0.0, 4.0)),
                                static_cast<float>(detail::uniform(gen, 0.0, 2.0)),
                                static_cast<float>(detail::uniform(gen, -0.1, 0.1)));
  for (int i = 0; i < 24; ++i)
    s.target.points.emplace_back(static_cast<float>(detail::uniform(gen, 0.0, 4.0)),
                                 static_cast<float>(detail::uniform(gen, 2.5, 5.0)),
                                 static_cast<float>(detail::uniform(gen, -0.1, 0.1)));
  // Mask over the left half of the target strip only.
  s.masks.projection = BevProjection::covering(Aabb({-1.0f, -1.0f, -1.0f}, {6.0f, 6.0f, 1.0f}), 0.1);
  const Eigen::Vector2d a = s.masks.projection.to_pixel(0.0, 2.5);
  const Eigen::Vector2d b = s.masks.projection.to_pixel(2.0, 5.0);
  s.masks.polygons.push_back({{a.x(), a.y()}, {b.x(), a.y()}, {b.x(), b.y()}, {a.x(), b.y()}});
  return s;
}

ModelParams<double> gradcheck_params(const ModelConfig &cfg, std::uint64_t seed) {
  auto params = initialize_params(cfg, seed).cast<double>();
  std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ull);
  for_each_tensor(
      [&](const std::string &name, auto &t) {
        if (name.ends_with(".bias"))
          for (Eigen::Index i = 0; i < t.size(); ++i)
            t.data()[i] = detail::uniform(gen, -0.5, 0.5);
        else if (name.ends_with(".gain"))
          for (Eigen::Index i = 0; i < t.size(); ++i)
            t.data()[i] = detail::uniform(gen, 0.5, 1.5);
      },
      params);
  return params;
}

LossConfig gradcheck_loss() {
  LossConfig cfg;
  cfg.spread_weight = 0.5;
  cfg.spread_margin = 1.0;
  return cfg;
}

GradCheckReport gradient_check(const GradCheckOptions &options) {
  options.model.validate();
  const LossConfig loss_cfg = gradcheck_loss();

  GradCheckReport report;
  const auto shapes = ModelParams<double>::zeros(options.model);
  for_each_tensor([&](const std::string &name, const auto &) { report.tensors.push_back({name}); }, shapes);

  for (std::size_t d = 0; d < options.draws; ++d) {
    const std::uint64_t seed = options.seed + d;
    const TrainingSample sample = gradcheck_sample(seed);
    const ProxyGraph graph = build_proxy_graph(sample.input, options.model, seed);
    ModelParams<double> params = gradcheck_params(options.model, seed);
    Evaluation base = evaluate(graph, sample, params, loss_cfg, true);
    if (options.corrupt_tensor) {
      bool found = false;
      for_each_tensor(
          [&](const std::string &name, auto &g) {
            if (name == *options.corrupt_tensor) {
              g.array() = g.array() * 1.5 + 1e-2;
              found = true;
            }
          },
          base.grad);
      if (!found)
        throw ConfigError("no tensor named " + *options.corrupt_tensor);
    }

    std::size_t slot = 0;
    for_each_tensor(
        [&](const std::string &, auto &p, const auto &g) {
          TensorCheck &tc = report.tensors[slot++];
          for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double saved = p.data()[i];
            p.data()[i] = saved + options.step;
            const Evaluation up = evaluate(graph, sample, params, loss_cfg, false);
            p.data()[i] = saved - options.step;
            const Evaluation down = evaluate(graph, sample, params, loss_cfg, false);
            p.data()[i] = saved;
            if (up.signature != base.signature || down.signature != base.signature) {
              ++tc.skipped;
              continue;
            }
            const double numeric = (up.loss - down.loss) / (2.0 * options.step);
            const double analytic = g.data()[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
            tc.max_rel_error = std::max(tc.max_rel_error, std::abs(analytic - numeric) / denom);
            ++tc.checked;
          }
        },
        params, base.grad);
  }

  for (const auto &tc : report.tensors) {
    report.checked += tc.checked;
    report.skipped += tc.skipped;
    if (report.worst_tensor.empty() || tc.max_rel_error > report.max_rel_error) {
      report.max_rel_error = tc.max_rel_error;
      report.worst_tensor = tc.name;
    }
  }
  report.passed = report.checked > 0 && report.max_rel_error < options.threshold;
  return report;
}

} // namespace terrain
