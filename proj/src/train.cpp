#include "terrain/training.hpp"

#include <cmath>
#include <random>

namespace terrain {

namespace {

ModelParams<float> zero_like(const ModelConfig &cfg) {
  auto p = ModelParams<float>::zeros(cfg);
  for_each_tensor([](const std::string &, auto &t) { t.setZero(); }, p);
  return p;
}

} // namespace

TrainState TrainState::initial(const ModelConfig &cfg, std::uint64_t seed) {
  TrainState s;
  s.params = initialize_params(cfg, seed);
  s.adam_m = zero_like(cfg);
  s.adam_v = zero_like(cfg);
  s.seed = seed;
  return s;
}

double sample_loss(const TrainingSample &sample, const ModelParams<float> &params, const LossConfig &loss_cfg) {
  const ProxyGraph graph = build_proxy_graph(sample.input, params.config, sample.seed);
  return evaluate(graph, sample, params.cast<double>(), loss_cfg, false).loss;
}

TrainResult train(const std::vector<TrainingSample> &dataset, TrainState state, const LossConfig &loss_cfg,
                  const TrainOptions &options, const TrainProgress &progress) {
  if (dataset.empty())
    throw ConfigError("training needs at least one sample");
  loss_cfg.validate();
  if (!(options.lr > 0.0))
    throw ConfigError("learning rate must be positive");

  std::vector<ProxyGraph> graphs;
  graphs.reserve(dataset.size());
  for (const auto &sample : dataset)
    graphs.push_back(build_proxy_graph(sample.input, state.params.config, sample.seed));

  TrainResult result;
  result.loss_trace.reserve(options.steps);
  for (std::size_t it = 0; it < options.steps; ++it) {
    // Seeded per absolute step so that resumed runs draw the same sequence.
    std::mt19937_64 gen(options.seed + state.step);
    const std::size_t pick = static_cast<std::size_t>(gen() % dataset.size());

    Evaluation ev;
    try {
      ev = evaluate(graphs[pick], dataset[pick], state.params.cast<double>(), loss_cfg, true);
    } catch (const NumericError &e) {
      result.diverged = true;
      result.diagnostic = "step " + std::to_string(state.step) + " (sample " + dataset[pick].source_id + "): " + e.what();
      break;
    }
    result.loss_trace.push_back(ev.loss);
    if (progress)
      progress(state.step, ev.loss);

    const double t = static_cast<double>(state.step + 1);
    const double correct1 = 1.0 - std::pow(options.beta1, t);
    const double correct2 = 1.0 - std::pow(options.beta2, t);
    for_each_tensor(
        [&](const std::string &, auto &param, auto &m, auto &v, const auto &grad) {
          for (Eigen::Index i = 0; i < param.size(); ++i) {
            const double g = grad.data()[i];
            const double mi = options.beta1 * m.data()[i] + (1.0 - options.beta1) * g;
            const double vi = options.beta2 * v.data()[i] + (1.0 - options.beta2) * g * g;
            m.data()[i] = static_cast<float>(mi);
            v.data()[i] = static_cast<float>(vi);
            const double update = options.lr * (mi / correct1) / (std::sqrt(vi / correct2) + options.epsilon);
            param.data()[i] = static_cast<float>(param.data()[i] - update);
          }
        },
        state.params, state.adam_m, state.adam_v, ev.grad);
    ++state.step;
  }
  result.state = std::move(state);
  return result;
}

} // namespace terrain
