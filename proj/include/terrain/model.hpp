#ifndef TERRAIN_MODEL_HPP
#define TERRAIN_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "terrain/cloud.hpp"
#include "terrain/dataset.hpp"
#include "terrain/objective.hpp"

namespace terrain {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ModelConfig {
  std::uint32_t n_fps = 256;
  std::uint32_t n_proxy = 32;
  std::uint32_t k_edge = 8;
  std::uint32_t d_model = 64;
  std::uint32_t n_heads = 4;
  std::uint32_t n_layers = 4;
  /// Output points generated per proxy token.
  std::uint32_t points_per_proxy = 2;

  std::uint32_t output_count() const { return n_proxy * points_per_proxy; }
  void validate() const;

  /// The small configuration used for gradient checks.
  static ModelConfig tiny();

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// y = x W^T + b for row-per-token inputs.
template <typename Scalar>
struct Affine {
  MatrixX<Scalar> weight; // out x in
  VectorX<Scalar> bias;

  Affine() = default;
  Affine(Eigen::Index in, Eigen::Index out) : weight(MatrixX<Scalar>::Zero(out, in)), bias(VectorX<Scalar>::Zero(out)) {}

  template <typename Derived>
  MatrixX<Scalar> operator()(const Eigen::MatrixBase<Derived> &x) const {
    MatrixX<Scalar> y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }
};

template <typename Scalar>
struct EncoderLayer {
  VectorX<Scalar> norm1_gain, norm1_bias;
  Affine<Scalar> query, key, value, output;
  VectorX<Scalar> norm2_gain, norm2_bias;
  Affine<Scalar> ffn1, ffn2;
};

/// Learnable tensors of the proxy network, templated on storage scalar.
template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  Affine<Scalar> edge1, edge2; // edge features 6 -> d -> d
  Affine<Scalar> pos1, pos2;   // positional encoding 3 -> d -> d
  std::vector<EncoderLayer<Scalar>> layers;
  Affine<Scalar> head; // d -> 3 * points_per_proxy

  /// Correctly shaped tensors: zero weights and biases, unit norm gains.
  static ModelParams zeros(const ModelConfig &cfg);

  template <typename To>
  ModelParams<To> cast() const;
};

/**
 * Calls f(name, t0, t1, ...) for every tensor, walking the given parameter
 * sets in lockstep. The order is fixed and defines the checkpoint layout.
 */
template <typename F, typename First, typename... Rest>
void for_each_tensor(F &&f, First &first, Rest &...rest) {
  auto visit = [&](const std::string &name, auto get) { f(name, get(first), get(rest)...); };
  auto affine = [&](const std::string &name, auto get) {
    visit(name + ".weight", [&get](auto &p) -> auto & { return get(p).weight; });
    visit(name + ".bias", [&get](auto &p) -> auto & { return get(p).bias; });
  };
  affine("edge.0", [](auto &p) -> auto & { return p.edge1; });
  affine("edge.1", [](auto &p) -> auto & { return p.edge2; });
  affine("pos.0", [](auto &p) -> auto & { return p.pos1; });
  affine("pos.1", [](auto &p) -> auto & { return p.pos2; });
  for (std::size_t l = 0; l < first.layers.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l) + ".";
    visit(prefix + "norm1.gain", [l](auto &p) -> auto & { return p.layers[l].norm1_gain; });
    visit(prefix + "norm1.bias", [l](auto &p) -> auto & { return p.layers[l].norm1_bias; });
    affine(prefix + "attn.query", [l](auto &p) -> auto & { return p.layers[l].query; });
    affine(prefix + "attn.key", [l](auto &p) -> auto & { return p.layers[l].key; });
    affine(prefix + "attn.value", [l](auto &p) -> auto & { return p.layers[l].value; });
    affine(prefix + "attn.output", [l](auto &p) -> auto & { return p.layers[l].output; });
    visit(prefix + "norm2.gain", [l](auto &p) -> auto & { return p.layers[l].norm2_gain; });
    visit(prefix + "norm2.bias", [l](auto &p) -> auto & { return p.layers[l].norm2_bias; });
    affine(prefix + "ffn.0", [l](auto &p) -> auto & { return p.layers[l].ffn1; });
    affine(prefix + "ffn.1", [l](auto &p) -> auto & { return p.layers[l].ffn2; });
  }
  affine("head", [](auto &p) -> auto & { return p.head; });
}

template <typename Scalar>
template <typename To>
ModelParams<To> ModelParams<Scalar>::cast() const {
  auto out = ModelParams<To>::zeros(config);
  for_each_tensor([](const std::string &, const auto &src, auto &dst) { dst = src.template cast<To>(); }, *this,
                  out);
  return out;
}

/// Glorot-uniform weights, zero biases, unit gains.
ModelParams<float> initialize_params(const ModelConfig &cfg, std::uint64_t seed);

std::size_t parameter_count(const ModelConfig &cfg);

/**
 * Discrete structure of one forward pass: the furthest-point subsample, its
 * edge neighborhoods, the proxy centers and their pooling neighborhoods.
 * Fixed by (X, config, seed); gradients treat it as constant.
 */
struct ProxyGraph {
  PointMatrix<double> points;                           // retained points
  std::vector<std::size_t> retained;                    // indices into X
  std::size_t k_edge = 0;                               // neighbors per point
  std::vector<std::size_t> edge_neighbors;              // points.rows() * k_edge
  std::vector<std::size_t> centers;                     // into retained
  std::size_t k_pool = 0;                               // pooled points per proxy
  std::vector<std::size_t> pool_neighbors;              // n_proxy * k_pool
  MatrixX<double> edge_inputs;                          // [x_i ; x_j - x_i] rows
  PointMatrix<double> center_points;
};

ProxyGraph build_proxy_graph(const PointCloud &input, const ModelConfig &cfg, std::uint64_t seed);

template <typename Scalar>
struct PointProxy {
  Eigen::Matrix<Scalar, 3, 1> coordinate;
  VectorX<Scalar> feature;
};

/// Intermediate values of a forward pass kept for the reverse pass.
template <typename Scalar>
struct ForwardCache {
  struct Layer {
    MatrixX<Scalar> input, xhat1, norm1, query, key, value, heads_out, after_attn, xhat2, norm2, hidden_pre;
    VectorX<Scalar> rstd1, rstd2;
    std::vector<MatrixX<Scalar>> attention; // one n_proxy x n_proxy matrix per head
  };

  MatrixX<Scalar> edge_pre1, edge_hidden1, edge_pre2; // edge MLP
  MatrixX<Scalar> edge_features;         // max-pooled, one row per retained point
  Eigen::MatrixXi edge_argmax;           // winning edge row per (point, channel)
  MatrixX<Scalar> proxy_features;        // pooled per proxy
  Eigen::MatrixXi proxy_argmax;          // winning retained point per (proxy, channel)
  MatrixX<Scalar> pos_pre;               // pre-activation of the positional encoder
  std::vector<Layer> layers;
  MatrixX<Scalar> tokens;                // encoder output, one row per proxy
  PointMatrix<Scalar> prediction;        // M points
};

template <typename Scalar>
std::vector<PointProxy<Scalar>> extract_proxies(const PointCloud &input, const ModelParams<Scalar> &params,
                                                std::uint64_t seed);

/// Encoder output with every proxy token repeated points_per_proxy times (M rows).
template <typename Scalar>
MatrixX<Scalar> encode(const std::vector<PointProxy<Scalar>> &proxies, const ModelParams<Scalar> &params,
                       ForwardCache<Scalar> *cache = nullptr);

/// Token slot j of proxy i is offset from the proxy by rows 3j..3j+2 of the head.
template <typename Scalar>
PointMatrix<Scalar> project(const MatrixX<Scalar> &tokens, const ModelParams<Scalar> &params,
                            const std::vector<PointProxy<Scalar>> &proxies);

template <typename Scalar>
PointMatrix<Scalar> forward(const ProxyGraph &graph, const ModelParams<Scalar> &params,
                            ForwardCache<Scalar> *cache = nullptr);

/// extract_proxies -> encode -> project.
PointCloud forward(const PointCloud &input, const ModelParams<float> &params, std::uint64_t seed);

/// Reverse pass from d(loss)/d(prediction) to parameter gradients.
template <typename Scalar>
ModelParams<Scalar> backward(const ProxyGraph &graph, const ModelParams<Scalar> &params,
                             const ForwardCache<Scalar> &cache, const PointMatrix<Scalar> &grad_prediction);

/// Fingerprint of every ReLU mask and max-pool winner in a cached pass.
template <typename Scalar>
std::uint64_t activation_signature(const ForwardCache<Scalar> &cache);

struct Evaluation {
  double loss = 0.0;
  ModelParams<double> grad;
  PointMatrix<double> prediction;
  std::uint64_t signature = 0;
};

/// Loss of one sample and, when requested, exact gradients for all tensors.
Evaluation evaluate(const ProxyGraph &graph, const TrainingSample &sample, const ModelParams<double> &params,
                    const LossConfig &loss_cfg, bool with_grad = true);

} // namespace terrain

#endif // TERRAIN_MODEL_HPP
