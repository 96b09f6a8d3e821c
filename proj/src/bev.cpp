#include "terrain/bev.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "terrain/cloud_io.hpp"

namespace terrain {

using json = nlohmann::json;

void BevProjection::validate() const {
  if (!(meters_per_pixel > 0.0) || !std::isfinite(meters_per_pixel))
    throw ConfigError("meters_per_pixel must be positive");
  if (width < 1 || height < 1)
    throw ConfigError("projection width and height must be at least 1");
  if (!origin_xy.allFinite())
    throw ConfigError("projection origin must be finite");
}

BevProjection BevProjection::covering(const Aabb &box, double meters_per_pixel) {
  BevProjection proj;
  proj.origin_xy = Eigen::Vector2d(box.min.x(), box.min.y());
  proj.meters_per_pixel = meters_per_pixel;
  const auto span = [&](float lo, float hi) {
    return static_cast<std::uint32_t>(std::max(1.0, std::ceil((double{hi} - double{lo}) / meters_per_pixel)));
  };
  proj.width = span(box.min.x(), box.max.x());
  proj.height = span(box.min.y(), box.max.y());
  proj.validate();
  return proj;
}

double signed_area(const Polygon &poly) {
  double twice = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++)
    twice += poly[j].x() * poly[i].y() - poly[i].x() * poly[j].y();
  return 0.5 * twice;
}

void BevMaskSet::validate() const {
  projection.validate();
  for (std::size_t i = 0; i < polygons.size(); ++i) {
    const auto &poly = polygons[i];
    if (poly.size() < 3)
      throw ConfigError("mask polygon " + std::to_string(i) + " has fewer than 3 vertices");
    for (const auto &v : poly)
      if (!v.allFinite())
        throw ConfigError("mask polygon " + std::to_string(i) + " has a non-finite vertex");
    if (signed_area(poly) == 0.0)
      throw ConfigError("mask polygon " + std::to_string(i) + " is degenerate");
  }
}

bool point_in_polygon(const Polygon &poly, const Eigen::Vector2d &uv) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Eigen::Vector2d &a = poly[j];
    const Eigen::Vector2d &b = poly[i];
    const double cross = (b.x() - a.x()) * (uv.y() - a.y()) - (b.y() - a.y()) * (uv.x() - a.x());
    if (cross == 0.0 && uv.x() >= std::min(a.x(), b.x()) && uv.x() <= std::max(a.x(), b.x()) &&
        uv.y() >= std::min(a.y(), b.y()) && uv.y() <= std::max(a.y(), b.y()))
      return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Eigen::Vector2d &a = poly[i];
    const Eigen::Vector2d &b = poly[j];
    if ((a.y() > uv.y()) != (b.y() > uv.y())) {
      const double x_cross = (b.x() - a.x()) * (uv.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (uv.x() < x_cross)
        inside = !inside;
    }
  }
  return inside;
}

namespace {

// Dense occupancy raster with a border so that dilation and boundary tracing
// never touch the edge.
struct CellRaster {
  long x0 = 0, y0 = 0;
  long nx = 0, ny = 0;
  std::vector<int> cells; // -1 empty, otherwise component id

  int &at(long x, long y) { return cells[static_cast<std::size_t>((y - y0) * nx + (x - x0))]; }
  int get(long x, long y) const {
    if (x < x0 || y < y0 || x >= x0 + nx || y >= y0 + ny)
      return -1;
    return cells[static_cast<std::size_t>((y - y0) * nx + (x - x0))];
  }
};

using Vertex = std::array<long, 2>;

// Directions in CCW order: +x, +y, -x, -y.
constexpr std::array<Vertex, 4> kDirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

std::vector<std::vector<Vertex>> trace_loops(const std::vector<std::array<long, 2>> &cells) {
  std::map<Vertex, bool> filled;
  for (const auto &c : cells)
    filled[c] = true;
  auto has = [&](long x, long y) { return filled.count({x, y}) > 0; };

  // Directed boundary edges with the region on the left, keyed by start vertex.
  std::map<Vertex, std::vector<int>> outgoing;
  for (const auto &[c, _] : filled) {
    const long x = c[0], y = c[1];
    if (!has(x, y - 1)) outgoing[{x, y}].push_back(0);
    if (!has(x + 1, y)) outgoing[{x + 1, y}].push_back(1);
    if (!has(x, y + 1)) outgoing[{x + 1, y + 1}].push_back(2);
    if (!has(x - 1, y)) outgoing[{x, y + 1}].push_back(3);
  }

  // Successor of an edge: at its end vertex take the left-most turn. At a
  // pinch vertex this pairs each incoming edge with the outgoing edge of the
  // same lobe, so every edge lies on exactly one simple loop.
  auto successor = [&](const Vertex &end, int dir) {
    const auto &cands = outgoing.at(end);
    for (int turn : {1, 0, 3}) {
      const int want = (dir + turn) % 4;
      if (std::find(cands.begin(), cands.end(), want) != cands.end())
        return want;
    }
    throw std::logic_error("open boundary while tracing mask");
  };

  std::map<std::pair<Vertex, int>, bool> visited;
  std::vector<std::vector<Vertex>> loops;
  for (const auto &[start, dirs] : outgoing)
    for (int d0 : dirs) {
      if (visited.count({start, d0}))
        continue;
      std::vector<Vertex> loop;
      Vertex v = start;
      int dir = d0;
      do {
        visited[{v, dir}] = true;
        loop.push_back(v);
        v = {v[0] + kDirs[dir][0], v[1] + kDirs[dir][1]};
        dir = successor(v, dir);
      } while (!(v == start && dir == d0));
      loops.push_back(std::move(loop));
    }
  return loops;
}

std::vector<Vertex> drop_collinear(const std::vector<Vertex> &loop) {
  std::vector<Vertex> out;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex &prev = loop[(i + n - 1) % n];
    const Vertex &cur = loop[i];
    const Vertex &next = loop[(i + 1) % n];
    const long cross = (cur[0] - prev[0]) * (next[1] - cur[1]) - (cur[1] - prev[1]) * (next[0] - cur[0]);
    if (cross != 0)
      out.push_back(cur);
  }
  return out;
}

} // namespace

BevMaskSet fallback_cluster_masks(const PointCloud &targets, double cell, const BevProjection &projection) {
  projection.validate();
  if (!(cell > 0.0))
    throw ConfigError("cluster cell size must be positive");
  if (targets.empty())
    throw ConfigError("cannot build cluster masks from an empty target cloud");

  std::vector<std::array<long, 2>> occupied;
  occupied.reserve(targets.size());
  long min_x = std::numeric_limits<long>::max(), min_y = min_x;
  long max_x = std::numeric_limits<long>::min(), max_y = max_x;
  for (const auto &p : targets.points) {
    const long cx = static_cast<long>(std::floor((double{p.x()} - projection.origin_xy.x()) / cell));
    const long cy = static_cast<long>(std::floor((double{p.y()} - projection.origin_xy.y()) / cell));
    occupied.push_back({cx, cy});
    min_x = std::min(min_x, cx);
    min_y = std::min(min_y, cy);
    max_x = std::max(max_x, cx);
    max_y = std::max(max_y, cy);
  }

  CellRaster raster;
  raster.x0 = min_x - 2;
  raster.y0 = min_y - 2;
  raster.nx = max_x - min_x + 5;
  raster.ny = max_y - min_y + 5;
  raster.cells.assign(static_cast<std::size_t>(raster.nx * raster.ny), -1);
  for (const auto &c : occupied)
    raster.at(c[0], c[1]) = -2; // occupied, not yet labeled

  // 8-connected components in scan order.
  std::vector<std::vector<std::array<long, 2>>> components;
  for (long y = raster.y0; y < raster.y0 + raster.ny; ++y)
    for (long x = raster.x0; x < raster.x0 + raster.nx; ++x) {
      if (raster.get(x, y) != -2)
        continue;
      const int id = static_cast<int>(components.size());
      components.emplace_back();
      std::deque<std::array<long, 2>> queue{{x, y}};
      raster.at(x, y) = id;
      while (!queue.empty()) {
        const auto c = queue.front();
        queue.pop_front();
        components.back().push_back(c);
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx)
            if (raster.get(c[0] + dx, c[1] + dy) == -2) {
              raster.at(c[0] + dx, c[1] + dy) = id;
              queue.push_back({c[0] + dx, c[1] + dy});
            }
      }
    }

  BevMaskSet masks;
  masks.projection = projection;
  const double scale = cell / projection.meters_per_pixel;
  for (const auto &component : components) {
    std::map<std::array<long, 2>, bool> dilated;
    for (const auto &c : component)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx)
          dilated[{c[0] + dx, c[1] + dy}] = true;
    std::vector<std::array<long, 2>> cells;
    cells.reserve(dilated.size());
    for (const auto &[c, _] : dilated)
      cells.push_back(c);

    for (const auto &loop : trace_loops(cells)) {
      const auto corners = drop_collinear(loop);
      if (corners.size() < 3)
        continue;
      Polygon poly;
      poly.reserve(corners.size());
      for (const auto &v : corners)
        poly.emplace_back(static_cast<double>(v[0]) * scale, static_cast<double>(v[1]) * scale);
      if (signed_area(poly) > 0.0) // holes wind clockwise and are dropped
        masks.polygons.push_back(std::move(poly));
    }
  }
  return masks;
}

std::string masks_to_json(const BevMaskSet &masks) {
  json j;
  j["projection"] = {
      {"origin_xy", {masks.projection.origin_xy.x(), masks.projection.origin_xy.y()}},
      {"meters_per_pixel", masks.projection.meters_per_pixel},
      {"width", masks.projection.width},
      {"height", masks.projection.height},
  };
  j["polygons"] = json::array();
  for (const auto &poly : masks.polygons) {
    json jp = json::array();
    for (const auto &v : poly)
      jp.push_back({v.x(), v.y()});
    j["polygons"].push_back(std::move(jp));
  }
  return j.dump(1) + "\n";
}

BevMaskSet masks_from_json(const std::string &text) {
  BevMaskSet masks;
  try {
    const json j = json::parse(text);
    const auto &p = j.at("projection");
    const auto &origin = p.at("origin_xy");
    if (origin.size() != 2)
      throw FormatError("masks: origin_xy must have two entries");
    masks.projection.origin_xy = {origin.at(0).get<double>(), origin.at(1).get<double>()};
    masks.projection.meters_per_pixel = p.at("meters_per_pixel").get<double>();
    masks.projection.width = p.at("width").get<std::uint32_t>();
    masks.projection.height = p.at("height").get<std::uint32_t>();
    for (const auto &jp : j.at("polygons")) {
      Polygon poly;
      for (const auto &v : jp) {
        if (v.size() != 2)
          throw FormatError("masks: polygon vertex must be [u, v]");
        poly.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
      }
      masks.polygons.push_back(std::move(poly));
    }
  } catch (const json::exception &e) {
    throw FormatError(std::string("masks: ") + e.what());
  }
  try {
    masks.validate();
  } catch (const ConfigError &e) {
    throw FormatError(std::string("masks: ") + e.what());
  }
  return masks;
}

void write_masks(const BevMaskSet &masks, const std::filesystem::path &path) {
  detail::write_file(path, masks_to_json(masks));
}

BevMaskSet read_masks(const std::filesystem::path &path) {
  return masks_from_json(detail::read_file(path));
}

} // namespace terrain
