#include "terrain/sampling.hpp"

namespace terrain {

KdIndex<float> build_index(const PointCloud &cloud) {
  return KdIndex<float>(cloud.matrix<float>());
}

FpsResult furthest_point_sample(const PointCloud &cloud, std::size_t count, std::uint64_t seed) {
  return furthest_point_sample(cloud.matrix<float>(), count, seed);
}

} // namespace terrain
