#include "terrain/model.hpp"

#include <cmath>
#include <random>

#include "terrain/detail/random.hpp"
#include "terrain/sampling.hpp"

namespace terrain {

void ModelConfig::validate() const {
  if (n_fps == 0 || n_proxy == 0 || k_edge == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 ||
      points_per_proxy == 0)
    throw ConfigError("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  if (n_proxy > n_fps)
    throw ConfigError("n_proxy must not exceed n_fps");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.n_fps = 16;
  cfg.n_proxy = 4;
  cfg.d_model = 8;
  return cfg;
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::zeros(const ModelConfig &cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.d_model;
  ModelParams p;
  p.config = cfg;
  p.edge1 = Affine<Scalar>(6, d);
  p.edge2 = Affine<Scalar>(d, d);
  p.pos1 = Affine<Scalar>(3, d);
  p.pos2 = Affine<Scalar>(d, d);
  p.layers.resize(cfg.n_layers);
  for (auto &layer : p.layers) {
    layer.norm1_gain = VectorX<Scalar>::Ones(d);
    layer.norm1_bias = VectorX<Scalar>::Zero(d);
    layer.query = layer.key = layer.value = layer.output = Affine<Scalar>(d, d);
    layer.norm2_gain = VectorX<Scalar>::Ones(d);
    layer.norm2_bias = VectorX<Scalar>::Zero(d);
    layer.ffn1 = layer.ffn2 = Affine<Scalar>(d, d);
  }
  p.head = Affine<Scalar>(d, 3 * Eigen::Index{cfg.points_per_proxy});
  return p;
}

template struct ModelParams<float>;
template struct ModelParams<double>;

ModelParams<float> initialize_params(const ModelConfig &cfg, std::uint64_t seed) {
  auto params = ModelParams<float>::zeros(cfg);
  std::mt19937_64 gen(seed);
  for_each_tensor(
      [&](const std::string &name, auto &t) {
        if (!name.ends_with(".weight"))
          return;
        const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
        for (Eigen::Index j = 0; j < t.cols(); ++j)
          for (Eigen::Index i = 0; i < t.rows(); ++i)
            t(i, j) = static_cast<float>(detail::uniform(gen, -limit, limit));
      },
      params);
  return params;
}

std::size_t parameter_count(const ModelConfig &cfg) {
  auto params = ModelParams<float>::zeros(cfg);
  std::size_t n = 0;
  for_each_tensor([&](const std::string &, const auto &t) { n += static_cast<std::size_t>(t.size()); }, params);
  return n;
}

ProxyGraph build_proxy_graph(const PointCloud &input, const ModelConfig &cfg, std::uint64_t seed) {
  cfg.validate();
  if (input.size() < cfg.n_proxy)
    throw DomainError("input too small: " + std::to_string(input.size()) + " points for " +
                      std::to_string(cfg.n_proxy) + " proxies");
  const PointMatrix<double> all = input.matrix<double>();

  ProxyGraph g;
  g.retained = furthest_point_sample(all, cfg.n_fps, seed).indices;
  const auto n = static_cast<Eigen::Index>(g.retained.size());
  g.points.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    g.points.row(i) = all.row(static_cast<Eigen::Index>(g.retained[static_cast<std::size_t>(i)]));

  const KdIndex<double> index(g.points);
  g.k_edge = std::min<std::size_t>(cfg.k_edge, g.retained.size());
  g.edge_neighbors.reserve(g.retained.size() * g.k_edge);
  g.edge_inputs.resize(n * static_cast<Eigen::Index>(g.k_edge), 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto nbrs = index.knn(g.points.row(i).transpose(), g.k_edge);
    for (std::size_t t = 0; t < nbrs.size(); ++t) {
      const auto row = i * static_cast<Eigen::Index>(g.k_edge) + static_cast<Eigen::Index>(t);
      const auto j = static_cast<Eigen::Index>(nbrs[t].index);
      g.edge_neighbors.push_back(nbrs[t].index);
      g.edge_inputs.block(row, 0, 1, 3) = g.points.row(i);
      g.edge_inputs.block(row, 3, 1, 3) = g.points.row(j) - g.points.row(i);
    }
  }

  g.centers = furthest_point_sample(g.points, cfg.n_proxy, seed + 1).indices;
  g.k_pool = g.k_edge;
  g.center_points.resize(static_cast<Eigen::Index>(g.centers.size()), 3);
  for (std::size_t c = 0; c < g.centers.size(); ++c) {
    const auto row = g.points.row(static_cast<Eigen::Index>(g.centers[c]));
    g.center_points.row(static_cast<Eigen::Index>(c)) = row;
    for (const auto &nb : index.knn(row.transpose(), g.k_pool))
      g.pool_neighbors.push_back(nb.index);
  }
  return g;
}

namespace {

constexpr double kNormEps = 1e-5;

template <typename S>
MatrixX<S> relu(const MatrixX<S> &x) {
  return x.cwiseMax(S(0));
}

template <typename S>
MatrixX<S> relu_backward(const MatrixX<S> &pre, const MatrixX<S> &grad) {
  return (pre.array() > S(0)).select(grad, S(0));
}

template <typename S>
void layer_norm(const MatrixX<S> &x, const VectorX<S> &gain, const VectorX<S> &bias, MatrixX<S> &xhat,
                VectorX<S> &rstd, MatrixX<S> &y) {
  xhat.resize(x.rows(), x.cols());
  rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).eval();
    rstd(r) = S(1) / std::sqrt(centered.square().mean() + S(kNormEps));
    xhat.row(r) = centered * rstd(r);
  }
  y = (xhat.array().rowwise() * gain.transpose().array()).rowwise() + bias.transpose().array();
}

template <typename S>
MatrixX<S> layer_norm_backward(const MatrixX<S> &dy, const MatrixX<S> &xhat, const VectorX<S> &rstd,
                               const VectorX<S> &gain, VectorX<S> &dgain, VectorX<S> &dbias) {
  dgain += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
  dbias += dy.colwise().sum().transpose();
  const MatrixX<S> dxhat = dy.array().rowwise() * gain.transpose().array();
  MatrixX<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const S m1 = dxhat.row(r).mean();
    const S m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
  }
  return dx;
}

template <typename S>
MatrixX<S> affine_backward(const Affine<S> &layer, const MatrixX<S> &input, const MatrixX<S> &dy, Affine<S> &grad) {
  grad.weight.noalias() += dy.transpose() * input;
  grad.bias += dy.colwise().sum().transpose();
  return dy * layer.weight;
}

template <typename S>
void softmax_rows(MatrixX<S> &m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S top = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - top).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// Channel-wise max over consecutive groups of rows given by `members`.
template <typename S>
void max_pool(const MatrixX<S> &values, const std::vector<std::size_t> &members, std::size_t group,
              MatrixX<S> &out, Eigen::MatrixXi &argmax, bool members_are_rows) {
  const auto groups = static_cast<Eigen::Index>(members.size() / group);
  out.resize(groups, values.cols());
  argmax.resize(groups, values.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      int best_row = -1;
      S best = S(0);
      for (std::size_t t = 0; t < group; ++t) {
        const std::size_t slot = static_cast<std::size_t>(gi) * group + t;
        const auto row = static_cast<int>(members_are_rows ? slot : members[slot]);
        if (best_row < 0 || values(row, c) > best) {
          best = values(row, c);
          best_row = row;
        }
      }
      out(gi, c) = best;
      argmax(gi, c) = best_row;
    }
}

template <typename S>
MatrixX<S> proxy_features(const ProxyGraph &g, const ModelParams<S> &p, ForwardCache<S> &cache) {
  const MatrixX<S> edges = g.edge_inputs.cast<S>();
  cache.edge_pre1 = p.edge1(edges);
  cache.edge_hidden1 = relu(cache.edge_pre1);
  cache.edge_pre2 = p.edge2(cache.edge_hidden1);
  const MatrixX<S> hidden2 = relu(cache.edge_pre2);
  max_pool(hidden2, g.edge_neighbors, g.k_edge, cache.edge_features, cache.edge_argmax, true);
  max_pool(cache.edge_features, g.pool_neighbors, g.k_pool, cache.proxy_features, cache.proxy_argmax, false);
  return cache.proxy_features;
}

template <typename S>
MatrixX<S> encoder(const MatrixX<S> &features, const MatrixX<S> &centers, const ModelParams<S> &p,
                   ForwardCache<S> &cache) {
  const auto &cfg = p.config;
  cache.pos_pre = p.pos1(centers);
  MatrixX<S> x = features + p.pos2(relu(cache.pos_pre));

  const Eigen::Index dh = cfg.d_model / cfg.n_heads;
  const S scale = S(1) / std::sqrt(S(dh));
  cache.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto &w = p.layers[l];
    auto &c = cache.layers[l];
    c.input = x;
    layer_norm(x, w.norm1_gain, w.norm1_bias, c.xhat1, c.rstd1, c.norm1);
    c.query = w.query(c.norm1);
    c.key = w.key(c.norm1);
    c.value = w.value(c.norm1);
    c.heads_out.resize(x.rows(), x.cols());
    c.attention.resize(cfg.n_heads);
    for (Eigen::Index h = 0; h < Eigen::Index{cfg.n_heads}; ++h) {
      auto &a = c.attention[static_cast<std::size_t>(h)];
      a = scale * c.query.middleCols(h * dh, dh) * c.key.middleCols(h * dh, dh).transpose();
      softmax_rows(a);
      c.heads_out.middleCols(h * dh, dh).noalias() = a * c.value.middleCols(h * dh, dh);
    }
    c.after_attn = x + w.output(c.heads_out);
    layer_norm(c.after_attn, w.norm2_gain, w.norm2_bias, c.xhat2, c.rstd2, c.norm2);
    c.hidden_pre = w.ffn1(c.norm2);
    x = c.after_attn + w.ffn2(relu(c.hidden_pre));
  }
  cache.tokens = x;
  return x;
}

template <typename S>
PointMatrix<S> head(const MatrixX<S> &tokens, const MatrixX<S> &centers, const ModelParams<S> &p) {
  const Eigen::Index q = p.config.points_per_proxy;
  const MatrixX<S> offsets = p.head(tokens);
  PointMatrix<S> out(tokens.rows() * q, 3);
  for (Eigen::Index i = 0; i < tokens.rows(); ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      out.row(i * q + j) = centers.row(i) + offsets.block(i, 3 * j, 1, 3);
  return out;
}

template <typename S>
void check_params(const ModelParams<S> &p) {
  p.config.validate();
  if (p.layers.size() != p.config.n_layers || p.edge1.weight.rows() != Eigen::Index{p.config.d_model} ||
      p.head.weight.rows() != 3 * Eigen::Index{p.config.points_per_proxy})
    throw ShapeError("model parameters do not match their configuration");
}

} // namespace

template <typename Scalar>
PointMatrix<Scalar> forward(const ProxyGraph &graph, const ModelParams<Scalar> &params, ForwardCache<Scalar> *cache) {
  check_params(params);
  if (graph.centers.size() != params.config.n_proxy)
    throw ShapeError("proxy graph has " + std::to_string(graph.centers.size()) + " centers, model expects " +
                     std::to_string(params.config.n_proxy));
  ForwardCache<Scalar> local;
  ForwardCache<Scalar> &c = cache ? *cache : local;
  const MatrixX<Scalar> centers = graph.center_points.cast<Scalar>();
  const MatrixX<Scalar> features = proxy_features(graph, params, c);
  const MatrixX<Scalar> tokens = encoder(features, centers, params, c);
  c.prediction = head(tokens, centers, params);
  return c.prediction;
}

template <typename Scalar>
std::vector<PointProxy<Scalar>> extract_proxies(const PointCloud &input, const ModelParams<Scalar> &params,
                                                std::uint64_t seed) {
  check_params(params);
  const ProxyGraph graph = build_proxy_graph(input, params.config, seed);
  ForwardCache<Scalar> cache;
  const MatrixX<Scalar> features = proxy_features(graph, params, cache);
  std::vector<PointProxy<Scalar>> proxies(graph.centers.size());
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    proxies[i].coordinate = graph.center_points.row(static_cast<Eigen::Index>(i)).transpose().cast<Scalar>();
    proxies[i].feature = features.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return proxies;
}

template <typename Scalar>
MatrixX<Scalar> encode(const std::vector<PointProxy<Scalar>> &proxies, const ModelParams<Scalar> &params,
                       ForwardCache<Scalar> *cache) {
  check_params(params);
  const auto n = static_cast<Eigen::Index>(proxies.size());
  if (proxies.size() != params.config.n_proxy)
    throw ConfigError("encode expects " + std::to_string(params.config.n_proxy) + " proxies, got " +
                      std::to_string(proxies.size()));
  MatrixX<Scalar> features(n, params.config.d_model), centers(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &proxy = proxies[static_cast<std::size_t>(i)];
    if (proxy.feature.size() != Eigen::Index{params.config.d_model})
      throw ConfigError("proxy feature width does not match d_model");
    features.row(i) = proxy.feature.transpose();
    centers.row(i) = proxy.coordinate.transpose();
  }
  ForwardCache<Scalar> local;
  const MatrixX<Scalar> tokens = encoder(features, centers, params, cache ? *cache : local);
  const Eigen::Index q = params.config.points_per_proxy;
  MatrixX<Scalar> out(n * q, tokens.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      out.row(i * q + j) = tokens.row(i);
  return out;
}

template <typename Scalar>
PointMatrix<Scalar> project(const MatrixX<Scalar> &tokens, const ModelParams<Scalar> &params,
                            const std::vector<PointProxy<Scalar>> &proxies) {
  const Eigen::Index q = params.config.points_per_proxy;
  if (tokens.rows() != static_cast<Eigen::Index>(proxies.size()) * q)
    throw ConfigError("project expects points_per_proxy tokens per proxy");
  PointMatrix<Scalar> out(tokens.rows(), 3);
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    const Eigen::Index slot = r % q;
    const auto &proxy = proxies[static_cast<std::size_t>(r / q)];
    const Eigen::Matrix<Scalar, 3, 1> offset =
        params.head.weight.middleRows(3 * slot, 3) * tokens.row(r).transpose() + params.head.bias.segment(3 * slot, 3);
    out.row(r) = (proxy.coordinate + offset).transpose();
  }
  return out;
}

PointCloud forward(const PointCloud &input, const ModelParams<float> &params, std::uint64_t seed) {
  const ProxyGraph graph = build_proxy_graph(input, params.config, seed);
  const auto prediction = forward(graph, params.cast<double>());
  if (!prediction.allFinite())
    throw NumericError("model produced non-finite predictions");
  return PointCloud::from_matrix(prediction);
}

template <typename Scalar>
ModelParams<Scalar> backward(const ProxyGraph &graph, const ModelParams<Scalar> &p, const ForwardCache<Scalar> &cache,
                             const PointMatrix<Scalar> &grad_prediction) {
  using M = MatrixX<Scalar>;
  const auto &cfg = p.config;
  auto g = ModelParams<Scalar>::zeros(cfg);
  for (auto &layer : g.layers) {
    layer.norm1_gain.setZero();
    layer.norm2_gain.setZero();
  }
  const Eigen::Index q = cfg.points_per_proxy;
  const Eigen::Index n = cache.tokens.rows();
  const Eigen::Index d = cfg.d_model;

  // Head: prediction row i*q + j reads offset columns 3j..3j+2 of token i.
  M d_offsets(n, 3 * q);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      d_offsets.block(i, 3 * j, 1, 3) = grad_prediction.row(i * q + j);
  M dx = affine_backward(p.head, cache.tokens, d_offsets, g.head);

  const Eigen::Index dh = d / cfg.n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto &w = p.layers[li];
    const auto &c = cache.layers[li];
    auto &gw = g.layers[li];

    M d_hidden = affine_backward(w.ffn2, relu(c.hidden_pre), dx, gw.ffn2);
    d_hidden = relu_backward(c.hidden_pre, d_hidden);
    const M d_norm2 = affine_backward(w.ffn1, c.norm2, d_hidden, gw.ffn1);
    M d_mid = dx + layer_norm_backward(d_norm2, c.xhat2, c.rstd2, w.norm2_gain, gw.norm2_gain, gw.norm2_bias);

    const M d_heads = affine_backward(w.output, c.heads_out, d_mid, gw.output);
    M dq(n, d), dk(n, d), dv(n, d);
    for (Eigen::Index h = 0; h < Eigen::Index{cfg.n_heads}; ++h) {
      const M &a = c.attention[static_cast<std::size_t>(h)];
      const auto d_out = d_heads.middleCols(h * dh, dh);
      const M da = d_out * c.value.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * d_out;
      const auto row_dot = (da.array() * a.array()).rowwise().sum().eval();
      const M ds = scale * (a.array() * (da.array().colwise() - row_dot)).matrix();
      dq.middleCols(h * dh, dh).noalias() = ds * c.key.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.query.middleCols(h * dh, dh);
    }
    M d_norm1 = affine_backward(w.query, c.norm1, dq, gw.query);
    d_norm1 += affine_backward(w.key, c.norm1, dk, gw.key);
    d_norm1 += affine_backward(w.value, c.norm1, dv, gw.value);
    dx = d_mid + layer_norm_backward(d_norm1, c.xhat1, c.rstd1, w.norm1_gain, gw.norm1_gain, gw.norm1_bias);
  }

  // Positional encoding and proxy features both feed the first layer input.
  const MatrixX<Scalar> centers = graph.center_points.cast<Scalar>();
  M d_pos = affine_backward(p.pos2, relu(cache.pos_pre), dx, g.pos2);
  d_pos = relu_backward(cache.pos_pre, d_pos);
  affine_backward(p.pos1, centers, d_pos, g.pos1);

  M d_features = M::Zero(cache.edge_features.rows(), d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index ch = 0; ch < d; ++ch)
      d_features(cache.proxy_argmax(i, ch), ch) += dx(i, ch);
  M d_hidden2 = M::Zero(cache.edge_pre2.rows(), d);
  for (Eigen::Index i = 0; i < d_features.rows(); ++i)
    for (Eigen::Index ch = 0; ch < d; ++ch)
      d_hidden2(cache.edge_argmax(i, ch), ch) += d_features(i, ch);
  M d_hidden1 = affine_backward(p.edge2, cache.edge_hidden1, relu_backward(cache.edge_pre2, d_hidden2), g.edge2);
  const M edges = graph.edge_inputs.cast<Scalar>();
  affine_backward(p.edge1, edges, relu_backward(cache.edge_pre1, d_hidden1), g.edge1);
  return g;
}

namespace {

struct SignatureHash {
  std::uint64_t h = 1469598103934665603ull;
  void add(std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  template <typename S>
  void add_mask(const MatrixX<S> &pre) {
    for (Eigen::Index i = 0; i < pre.size(); ++i)
      add(pre.data()[i] > S(0) ? 1u : 0u);
  }
  void add_indices(const Eigen::MatrixXi &m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      add(static_cast<std::uint64_t>(m.data()[i]));
  }
};

} // namespace

template <typename Scalar>
std::uint64_t activation_signature(const ForwardCache<Scalar> &cache) {
  SignatureHash s;
  s.add_mask(cache.edge_pre1);
  s.add_mask(cache.edge_pre2);
  s.add_indices(cache.edge_argmax);
  s.add_indices(cache.proxy_argmax);
  s.add_mask(cache.pos_pre);
  for (const auto &layer : cache.layers)
    s.add_mask(layer.hidden_pre);
  return s.h;
}

Evaluation evaluate(const ProxyGraph &graph, const TrainingSample &sample, const ModelParams<double> &params,
                    const LossConfig &loss_cfg, bool with_grad) {
  ForwardCache<double> cache;
  Evaluation ev;
  ev.prediction = forward(graph, params, &cache);
  if (!ev.prediction.allFinite())
    throw NumericError("model produced non-finite predictions");
  const auto loss = evaluate_loss(ev.prediction, sample.target.matrix<float>(), sample.masks, loss_cfg, with_grad);
  ev.loss = loss.value;
  SignatureHash s;
  s.add(activation_signature(cache));
  s.add(loss.signature);
  ev.signature = s.h;
  if (with_grad) {
    ev.grad = backward(graph, params, cache, loss.grad);
    bool finite = true;
    std::string bad;
    for_each_tensor(
        [&](const std::string &name, const auto &t) {
          if (finite && !t.allFinite()) {
            finite = false;
            bad = name;
          }
        },
        ev.grad);
    if (!finite)
      throw NumericError("non-finite gradient in tensor " + bad);
  }
  return ev;
}

#define TERRAIN_INSTANTIATE(S)                                                                                   \
  template PointMatrix<S> forward(const ProxyGraph &, const ModelParams<S> &, ForwardCache<S> *);                \
  template std::vector<PointProxy<S>> extract_proxies(const PointCloud &, const ModelParams<S> &, std::uint64_t); \
  template MatrixX<S> encode(const std::vector<PointProxy<S>> &, const ModelParams<S> &, ForwardCache<S> *);     \
  template PointMatrix<S> project(const MatrixX<S> &, const ModelParams<S> &, const std::vector<PointProxy<S>> &); \
  template ModelParams<S> backward(const ProxyGraph &, const ModelParams<S> &, const ForwardCache<S> &,          \
                                   const PointMatrix<S> &);                                                     \
  template std::uint64_t activation_signature(const ForwardCache<S> &);

TERRAIN_INSTANTIATE(float)
TERRAIN_INSTANTIATE(double)

#undef TERRAIN_INSTANTIATE

} // namespace terrain
