#include <gtest/gtest.h>

#include "support.hpp"
#include "terrain/dataset.hpp"
#include "terrain/error.hpp"
#include "terrain/gradcheck.hpp"
#include "terrain/model.hpp"

using namespace terrain;
using namespace terrain::test;

namespace {

/// Coordinates on a 1/8 m lattice so that translations by multiples of 1/8 are exact.
PointCloud lattice_input(std::mt19937_64 &gen, std::size_t n) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.emplace_back(static_cast<float>(gen() % 64) / 8.0f, static_cast<float>(gen() % 64) / 8.0f,
                          static_cast<float>(gen() % 8) / 8.0f);
  return c;
}

ModelParams<double> tiny_params(std::uint64_t seed) { return gradcheck_params(ModelConfig::tiny(), seed); }

} // namespace

TEST(ModelConfig, Invariants) {
  EXPECT_NO_THROW(ModelConfig{}.validate());
  ModelConfig c;
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.n_proxy = c.n_fps + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.points_per_proxy = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(ModelConfig{}.output_count(), 64u);
  EXPECT_EQ(ModelConfig::tiny().output_count(), 8u);
}

TEST(ModelParams, InitializationFollowsGlorotAndZeroBias) {
  const ModelConfig cfg;
  const auto p = initialize_params(cfg, 3);
  std::size_t total = 0;
  for_each_tensor(
      [&](const std::string &name, const auto &t) {
        total += static_cast<std::size_t>(t.size());
        if (name.ends_with(".weight")) {
          const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
          EXPECT_LE(t.cwiseAbs().maxCoeff(), limit) << name;
          EXPECT_GT(t.cwiseAbs().maxCoeff(), 0.5 * limit) << name;
        } else if (name.ends_with(".gain")) {
          EXPECT_TRUE((t.array() == 1.0f).all()) << name;
        } else {
          EXPECT_TRUE((t.array() == 0.0f).all()) << name;
        }
      },
      p);
  EXPECT_EQ(total, parameter_count(cfg));
  EXPECT_EQ(p.edge1.weight.cols(), 6);
  EXPECT_EQ(p.pos1.weight.cols(), 3);
  EXPECT_EQ(p.head.weight.rows(), 3 * Eigen::Index{cfg.points_per_proxy});
  EXPECT_EQ(p.layers.size(), cfg.n_layers);
}

TEST(ModelParams, SeedDeterminesInitialization) {
  const ModelConfig cfg = ModelConfig::tiny();
  EXPECT_EQ(initialize_params(cfg, 1).head.weight, initialize_params(cfg, 1).head.weight);
  EXPECT_NE(initialize_params(cfg, 1).head.weight, initialize_params(cfg, 2).head.weight);
}

TEST(Proxies, CountAndInputSize) {
  std::mt19937_64 gen(1);
  const auto params = tiny_params(1);
  EXPECT_EQ(extract_proxies(random_cloud(gen, 40), params, 0).size(), 4u);
  // Fewer points than n_fps is fine as long as there are n_proxy of them.
  EXPECT_EQ(extract_proxies(random_cloud(gen, 5), params, 0).size(), 4u);
  EXPECT_THROW(extract_proxies(random_cloud(gen, 3), params, 0), DomainError);
}

TEST(Proxies, TranslationShiftsCoordinatesExactly) {
  std::mt19937_64 gen(2);
  auto params = tiny_params(2);
  const PointCloud x = lattice_input(gen, 60);
  const Eigen::Vector3f t(2.0f, -3.5f, 0.25f);
  PointCloud moved = x;
  for (auto &p : moved.points)
    p += t;
  const auto a = extract_proxies(x, params, 9);
  const auto b = extract_proxies(moved, params, 9);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(b[i].coordinate, a[i].coordinate + t.cast<double>());
  // Features change only through the absolute half of [x_i ; x_j - x_i].
  EXPECT_NE(a[0].feature, b[0].feature);
  params.edge1.weight.leftCols(3).setZero();
  const auto c = extract_proxies(x, params, 9);
  const auto d = extract_proxies(moved, params, 9);
  for (std::size_t i = 0; i < c.size(); ++i)
    EXPECT_TRUE(c[i].feature.isApprox(d[i].feature, 1e-12));
}

TEST(Proxies, DuplicatePointsStayFinite) {
  PointCloud x;
  for (int i = 0; i < 30; ++i)
    x.points.emplace_back(1.0f, 2.0f, 3.0f);
  const auto params = tiny_params(3);
  for (const auto &p : extract_proxies(x, params, 0))
    EXPECT_TRUE(p.feature.allFinite());
  EXPECT_TRUE(PointCloud(forward(x, initialize_params(ModelConfig::tiny(), 0), 0)).size() == 8u);
}

TEST(Encode, ShapeAndDuplication) {
  std::mt19937_64 gen(4);
  const auto params = tiny_params(4);
  const auto proxies = extract_proxies(random_cloud(gen, 30), params, 1);
  const auto tokens = encode(proxies, params);
  ASSERT_EQ(tokens.rows(), 8);
  ASSERT_EQ(tokens.cols(), 8);
  for (Eigen::Index i = 0; i < 4; ++i)
    EXPECT_EQ(tokens.row(2 * i), tokens.row(2 * i + 1));
  auto short_list = proxies;
  short_list.pop_back();
  EXPECT_THROW(encode(short_list, params), ConfigError);
}

TEST(Encode, PermutationEquivariant) {
  std::mt19937_64 gen(5);
  const auto params = tiny_params(5);
  const auto proxies = extract_proxies(random_cloud(gen, 30), params, 1);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<PointProxy<double>> permuted;
  for (auto i : perm)
    permuted.push_back(proxies[i]);
  const auto a = encode(proxies, params);
  const auto b = encode(permuted, params);
  const Eigen::Index q = params.config.points_per_proxy;
  for (std::size_t k = 0; k < perm.size(); ++k)
    for (Eigen::Index j = 0; j < q; ++j)
      EXPECT_TRUE(b.row(Eigen::Index(k) * q + j).isApprox(a.row(Eigen::Index(perm[k]) * q + j), 1e-12));
}

TEST(Encode, AttentionRowsAreDistributions) {
  std::mt19937_64 gen(6);
  const auto params = tiny_params(6);
  ForwardCache<double> cache;
  encode(extract_proxies(random_cloud(gen, 30), params, 1), params, &cache);
  ASSERT_EQ(cache.layers.size(), params.config.n_layers);
  for (const auto &layer : cache.layers) {
    ASSERT_EQ(layer.attention.size(), params.config.n_heads);
    for (const auto &a : layer.attention) {
      EXPECT_GE(a.minCoeff(), 0.0);
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        EXPECT_NEAR(a.row(r).sum(), 1.0, 1e-6);
    }
  }
}

TEST(Project, ZeroHeadRepeatsProxyCoordinates) {
  std::mt19937_64 gen(7);
  auto params = tiny_params(7);
  params.head.weight.setZero();
  params.head.bias.setZero();
  const auto proxies = extract_proxies(random_cloud(gen, 30), params, 1);
  const auto pred = project(encode(proxies, params), params, proxies);
  ASSERT_EQ(pred.rows(), 8);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      EXPECT_EQ(pred.row(2 * i + j).transpose(), proxies[std::size_t(i)].coordinate);
}

TEST(Forward, ComposesStagesAndIsDeterministic) {
  std::mt19937_64 gen(8);
  const PointCloud x = random_cloud(gen, 50);
  const auto params = tiny_params(8);
  const auto proxies = extract_proxies(x, params, 4);
  const auto staged = project(encode(proxies, params), params, proxies);
  const ProxyGraph graph = build_proxy_graph(x, params.config, 4);
  const auto direct = forward(graph, params);
  EXPECT_EQ(staged, direct);
  EXPECT_EQ(forward(graph, params), direct);
  EXPECT_TRUE(direct.allFinite());

  const auto stored = initialize_params(ModelConfig::tiny(), 8);
  const PointCloud a = forward(x, stored, 4);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(forward(x, stored, 4), a);
}

TEST(Forward, DefaultConfigOutputsM) {
  std::mt19937_64 gen(9);
  const PointCloud x = random_cloud(gen, 300);
  EXPECT_EQ(forward(x, initialize_params(ModelConfig{}, 1), 0).size(), 64u);
}

TEST(Backward, AlphaDoublesFirstTermContribution) {
  const TrainingSample s = gradcheck_sample(3);
  const auto params = tiny_params(3);
  const ProxyGraph graph = build_proxy_graph(s.input, params.config, s.seed);
  LossConfig zero, one, two;
  zero.alpha = 0.0;
  two.alpha = 2.0;
  const auto g0 = evaluate(graph, s, params, zero).grad;
  const auto g1 = evaluate(graph, s, params, one).grad;
  const auto g2 = evaluate(graph, s, params, two).grad;
  EXPECT_TRUE((g2.head.weight - g0.head.weight).isApprox(2.0 * (g1.head.weight - g0.head.weight), 1e-10));
  EXPECT_TRUE((g2.edge1.weight - g0.edge1.weight).isApprox(2.0 * (g1.edge1.weight - g0.edge1.weight), 1e-10));
}

TEST(Backward, NonFiniteParametersAreNumericErrors) {
  const TrainingSample s = gradcheck_sample(4);
  auto params = tiny_params(4);
  params.head.bias(0) = NAN;
  const ProxyGraph graph = build_proxy_graph(s.input, params.config, s.seed);
  EXPECT_THROW(evaluate(graph, s, params, LossConfig{}), NumericError);
}

TEST(GradCheck, TinyConfigPasses) {
  GradCheckOptions options;
  options.draws = 3;
  const GradCheckReport r = gradient_check(options);
  EXPECT_TRUE(r.passed) << r.worst_tensor << " " << r.max_rel_error;
  EXPECT_LT(r.max_rel_error, 1e-3);
  EXPECT_GT(r.checked, 1000u);
  std::size_t tensors = 0;
  const auto shapes = ModelParams<double>::zeros(options.model);
  for_each_tensor([&](const std::string &, const auto &) { ++tensors; }, shapes);
  EXPECT_EQ(r.tensors.size(), tensors);
}

TEST(GradCheck, CorruptedGradientIsNamed) {
  GradCheckOptions options;
  options.draws = 1;
  options.corrupt_tensor = "encoder.1.ffn.0.weight";
  const GradCheckReport r = gradient_check(options);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_tensor, "encoder.1.ffn.0.weight");
  options.corrupt_tensor = "no.such.tensor";
  EXPECT_THROW(gradient_check(options), ConfigError);
}
