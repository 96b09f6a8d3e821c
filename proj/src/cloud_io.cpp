#include "terrain/cloud_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace terrain {

namespace detail {

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("short write to " + path.string());
}

} // namespace detail

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T load_le(const char *p) {
  std::array<char, sizeof(T)> buf;
  std::memcpy(buf.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

template <typename T>
void store_le(std::string &out, T v) {
  std::array<char, sizeof(T)> buf;
  std::memcpy(buf.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf.begin(), buf.end());
  out.append(buf.data(), sizeof(T));
}

constexpr std::size_t kNativeHeader = 12;

} // namespace

PointCloud read_native_cloud(const fs::path &path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < kNativeHeader || bytes.compare(0, 4, "TEPC") != 0)
    throw FormatError(path.string() + ": missing TEPC magic");
  if (static_cast<std::uint8_t>(bytes[4]) != kNativeCloudVersion)
    throw FormatError(path.string() + ": unsupported version " +
                      std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(bytes[4]))));
  const auto flags = static_cast<std::uint8_t>(bytes[5]);
  if ((flags & ~0x1u) != 0 || bytes[6] != 0 || bytes[7] != 0)
    throw FormatError(path.string() + ": reserved header bits set");
  const bool labeled = flags & 0x1u;
  const std::size_t n = load_le<std::uint32_t>(bytes.data() + 8);
  const std::size_t expected = kNativeHeader + n * 12 + (labeled ? n * 4 : 0);
  if (bytes.size() != expected)
    throw LengthError(path.string() + ": expected " + std::to_string(expected) + " bytes for " +
                      std::to_string(n) + " points, found " + std::to_string(bytes.size()));

  PointCloud cloud;
  cloud.points.resize(n);
  const char *p = bytes.data() + kNativeHeader;
  for (std::size_t i = 0; i < n; ++i, p += 12)
    cloud.points[i] = Point3(load_le<float>(p), load_le<float>(p + 4), load_le<float>(p + 8));
  if (labeled) {
    cloud.labels.emplace(n);
    for (std::size_t i = 0; i < n; ++i, p += 4)
      (*cloud.labels)[i] = load_le<std::uint32_t>(p);
  }
  validate_finite(cloud);
  return cloud;
}

void write_native_cloud(const PointCloud &cloud, const fs::path &path) {
  if (cloud.size() > 0xffffffffu)
    throw FormatError("cloud too large for native format");
  std::string out = "TEPC";
  out.push_back(static_cast<char>(kNativeCloudVersion));
  out.push_back(static_cast<char>(cloud.labels ? 1 : 0));
  out.append(2, '\0');
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  out.reserve(out.size() + cloud.size() * 16);
  for (const auto &pt : cloud.points)
    for (int k = 0; k < 3; ++k)
      store_le<float>(out, pt[k]);
  if (cloud.labels)
    for (auto label : *cloud.labels)
      store_le<std::uint32_t>(out, label);
  detail::write_file(path, out);
}

PointCloud read_kitti_velodyne(const fs::path &path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() % 16 != 0)
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 16);
  const char *p = bytes.data();
  for (auto &pt : cloud.points) {
    pt = Point3(load_le<float>(p), load_le<float>(p + 4), load_le<float>(p + 8));
    p += 16;
  }
  validate_finite(cloud);
  return cloud;
}

PointCloud read_kitti_labels(const fs::path &path, const PointCloud &cloud) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() != 4 * cloud.size())
    throw LengthError(path.string() + ": " + std::to_string(bytes.size() / 4) +
                      " label records for " + std::to_string(cloud.size()) + " points");
  PointCloud out = cloud;
  out.labels.emplace(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    (*out.labels)[i] = load_le<std::uint32_t>(bytes.data() + 4 * i) & 0xffffu;
  return out;
}

VoxelGrid read_kitti_voxels(const fs::path &bin_path, const std::optional<fs::path> &label_path,
                            const VoxelGridGeometry &geometry) {
  geometry.validate();
  const std::size_t n = geometry.voxel_count();
  const std::string bits = detail::read_file(bin_path);
  if (bits.size() != (n + 7) / 8)
    throw FormatError(bin_path.string() + ": expected " + std::to_string((n + 7) / 8) +
                      " bytes of occupancy, found " + std::to_string(bits.size()));
  std::vector<bool> occ(n);
  for (std::size_t i = 0; i < n; ++i)
    occ[i] = (static_cast<std::uint8_t>(bits[i / 8]) >> (7 - i % 8)) & 1u;

  std::optional<std::vector<std::uint16_t>> labels;
  if (label_path) {
    const std::string lbytes = detail::read_file(*label_path);
    if (lbytes.size() != 2 * n)
      throw FormatError(label_path->string() + ": expected " + std::to_string(2 * n) +
                        " bytes of voxel labels, found " + std::to_string(lbytes.size()));
    labels.emplace(n);
    for (std::size_t i = 0; i < n; ++i)
      (*labels)[i] = load_le<std::uint16_t>(lbytes.data() + 2 * i);
  }
  return VoxelGrid(geometry, std::move(occ), std::move(labels));
}

void write_kitti_voxels(const VoxelGrid &grid, const fs::path &bin_path,
                        const std::optional<fs::path> &label_path) {
  const std::size_t n = grid.occupancy.size();
  std::string bits((n + 7) / 8, '\0');
  for (std::size_t i = 0; i < n; ++i)
    if (grid.occupancy[i])
      bits[i / 8] = static_cast<char>(static_cast<std::uint8_t>(bits[i / 8]) | (0x80u >> (i % 8)));
  detail::write_file(bin_path, bits);
  if (label_path) {
    if (!grid.labels)
      throw ConfigError("cannot write labels of an unlabeled voxel grid");
    std::string out;
    out.reserve(2 * n);
    for (auto label : *grid.labels)
      store_le<std::uint16_t>(out, label);
    detail::write_file(*label_path, out);
  }
}

void write_ply(const std::vector<ColoredCloud> &layers, const fs::path &path) {
  std::size_t total = 0;
  for (const auto &layer : layers)
    total += layer.cloud->size();
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\nelement vertex " << total
     << "\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char line[128];
  for (const auto &layer : layers)
    for (const auto &p : layer.cloud->points) {
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g %u %u %u\n", p.x(), p.y(), p.z(),
                    unsigned{layer.color[0]}, unsigned{layer.color[1]}, unsigned{layer.color[2]});
      os << line;
    }
  detail::write_file(path, os.str());
}

} // namespace terrain
