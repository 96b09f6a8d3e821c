#include "terrain/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "terrain/cloud_io.hpp"

namespace terrain {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\"'");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\"'");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string &value) {
  std::string v = trim(value);
  if (!v.empty() && v.front() == '[' && v.back() == ']')
    v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!trim(part).empty())
      out.push_back(trim(part));
  return out;
}

double to_double(const std::string &key, const std::string &value) {
  const std::string v = trim(value);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  return out;
}

std::uint64_t to_uint(const std::string &key, const std::string &value) {
  const std::string v = trim(value);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  return out;
}

std::uint32_t to_u32(const std::string &key, const std::string &value) {
  const auto v = to_uint(key, value);
  if (v > 0xffffffffull)
    throw ConfigError(key + ": value out of range");
  return static_cast<std::uint32_t>(v);
}

bool to_bool(const std::string &key, const std::string &value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on")
    return true;
  if (v == "false" || v == "0" || v == "no" || v == "off")
    return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

Eigen::Vector3d to_vec3(const std::string &key, const std::string &value) {
  const auto parts = split_list(value);
  if (parts.size() != 3)
    throw ConfigError(key + ": expected three comma-separated numbers, got '" + value + "'");
  return {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename V>
std::string vec3(const V &v) {
  return num(v(0)) + "," + num(v(1)) + "," + num(v(2));
}

struct Field {
  std::string key;
  std::function<void(RunConfig &, const std::string &, const std::string &)> set;
  std::function<std::string(const RunConfig &)> get;
};

#define TERRAIN_DOUBLE(name, member)                                                                              \
  Field {                                                                                                          \
    name, [](RunConfig &c, const std::string &k, const std::string &v) { c.member = to_double(k, v); },         \
        [](const RunConfig &c) { return num(c.member); }                                                         \
  }
#define TERRAIN_U32(name, member)                                                                                 \
  Field {                                                                                                          \
    name, [](RunConfig &c, const std::string &k, const std::string &v) { c.member = to_u32(k, v); },            \
        [](const RunConfig &c) { return std::to_string(c.member); }                                             \
  }

const std::vector<Field> &fields() {
  static const std::vector<Field> table = {
      {"seed", [](RunConfig &c, const std::string &k, const std::string &v) { c.seed = to_uint(k, v); },
       [](const RunConfig &c) { return std::to_string(c.seed); }},

      TERRAIN_DOUBLE("dataset.d_y", dataset.d_y),
      {"dataset.road_labels",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         LabelSet labels;
         for (const auto &p : split_list(v))
           labels.insert(to_u32(k, p));
         c.dataset.road_labels = labels;
       },
       [](const RunConfig &c) {
         std::string s;
         for (auto l : c.dataset.road_labels)
           s += (s.empty() ? "" : ",") + std::to_string(l);
         return s;
       }},
      {"dataset.crop_min",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         const Eigen::Vector3f lo = to_vec3(k, v).cast<float>();
         const Eigen::Vector3f hi = c.dataset.crop_box ? c.dataset.crop_box->max : lo;
         c.dataset.crop_box = Aabb(lo, hi.cwiseMax(lo));
       },
       [](const RunConfig &c) { return c.dataset.crop_box ? vec3(c.dataset.crop_box->min) : std::string(); }},
      {"dataset.crop_max",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         const Eigen::Vector3f hi = to_vec3(k, v).cast<float>();
         const Eigen::Vector3f lo = c.dataset.crop_box ? c.dataset.crop_box->min : hi;
         if ((lo.array() > hi.array()).any())
           throw ConfigError(k + ": crop_max below crop_min");
         c.dataset.crop_box = Aabb(lo, hi);
       },
       [](const RunConfig &c) { return c.dataset.crop_box ? vec3(c.dataset.crop_box->max) : std::string(); }},
      {"dataset.mask_source",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         const std::string t = trim(v);
         if (t == "precomputed")
           c.dataset.mask_source = MaskSource::Precomputed;
         else if (t == "cluster")
           c.dataset.mask_source = MaskSource::GridCluster;
         else
           throw ConfigError(k + ": expected precomputed or cluster, got '" + v + "'");
       },
       [](const RunConfig &c) {
         return std::string(c.dataset.mask_source == MaskSource::Precomputed ? "precomputed" : "cluster");
       }},
      TERRAIN_DOUBLE("dataset.cluster_cell", dataset.cluster_cell),
      TERRAIN_DOUBLE("dataset.bev_meters_per_pixel", dataset.bev_meters_per_pixel),
      {"dataset.planar_buffer",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.dataset.planar_buffer = to_bool(k, v); },
       [](const RunConfig &c) { return std::string(c.dataset.planar_buffer ? "true" : "false"); }},

      {"grid.dims",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         const auto parts = split_list(v);
         if (parts.size() != 3)
           throw ConfigError(k + ": expected three comma-separated integers");
         for (int i = 0; i < 3; ++i)
           c.grid.dims[i] = to_u32(k, parts[i]);
       },
       [](const RunConfig &c) {
         return std::to_string(c.grid.dims[0]) + "," + std::to_string(c.grid.dims[1]) + "," +
                std::to_string(c.grid.dims[2]);
       }},
      {"grid.origin", [](RunConfig &c, const std::string &k, const std::string &v) { c.grid.origin = to_vec3(k, v); },
       [](const RunConfig &c) { return vec3(c.grid.origin); }},
      TERRAIN_DOUBLE("grid.resolution", grid.resolution),

      TERRAIN_U32("model.n_fps", model.n_fps),
      TERRAIN_U32("model.n_proxy", model.n_proxy),
      TERRAIN_U32("model.k_edge", model.k_edge),
      TERRAIN_U32("model.d_model", model.d_model),
      TERRAIN_U32("model.n_heads", model.n_heads),
      TERRAIN_U32("model.n_layers", model.n_layers),
      TERRAIN_U32("model.points_per_proxy", model.points_per_proxy),

      TERRAIN_DOUBLE("loss.delta", loss.delta),
      TERRAIN_DOUBLE("loss.alpha", loss.alpha),
      TERRAIN_DOUBLE("loss.beta", loss.beta),
      TERRAIN_DOUBLE("loss.spread_weight", loss.spread_weight),
      {"loss.spread_k",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.loss.spread_k = to_uint(k, v); },
       [](const RunConfig &c) { return std::to_string(c.loss.spread_k); }},
      TERRAIN_DOUBLE("loss.spread_margin", loss.spread_margin),

      {"train.steps",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.train.steps = to_uint(k, v); },
       [](const RunConfig &c) { return std::to_string(c.train.steps); }},
      TERRAIN_DOUBLE("train.lr", train.lr),
      TERRAIN_DOUBLE("train.beta1", train.beta1),
      TERRAIN_DOUBLE("train.beta2", train.beta2),
      TERRAIN_DOUBLE("train.epsilon", train.epsilon),

      {"eval.membership",
       [](RunConfig &c, const std::string &, const std::string &v) { c.eval.membership = parse_membership(trim(v)); },
       [](const RunConfig &c) { return to_string(c.eval.membership); }},
      TERRAIN_DOUBLE("eval.rho", eval.rho),
      {"eval.edges",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.eval.edges.clear();
         for (const auto &p : split_list(v))
           c.eval.edges.push_back(to_double(k, p));
       },
       [](const RunConfig &c) {
         std::string s;
         for (double e : c.eval.edges)
           s += (s.empty() ? "" : ",") + num(e);
         return s;
       }},

      {"paths.data", [](RunConfig &c, const std::string &, const std::string &v) { c.paths.data = trim(v); },
       [](const RunConfig &c) { return c.paths.data.string(); }},
      {"paths.out", [](RunConfig &c, const std::string &, const std::string &v) { c.paths.out = trim(v); },
       [](const RunConfig &c) { return c.paths.out.string(); }},
      {"paths.checkpoint",
       [](RunConfig &c, const std::string &, const std::string &v) { c.paths.checkpoint = trim(v); },
       [](const RunConfig &c) { return c.paths.checkpoint.string(); }},
  };
  return table;
}

#undef TERRAIN_DOUBLE
#undef TERRAIN_U32

} // namespace

void RunConfig::validate() const {
  dataset.validate();
  grid.validate();
  model.validate();
  loss.validate();
  eval.validate();
  if (!(train.lr > 0.0) || !(train.epsilon > 0.0))
    throw ConfigError("train.lr and train.epsilon must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) || !(train.beta2 >= 0.0 && train.beta2 < 1.0))
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
}

void apply_setting(RunConfig &cfg, const std::string &key, const std::string &value) {
  for (const auto &f : fields())
    if (f.key == key) {
      f.set(cfg, key, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto &f : fields())
    keys.push_back(f.key);
  return keys;
}

RunConfig parse_run_config(const std::string &text, const std::string &origin, std::set<std::string> *keys_seen) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error &e) {
    throw ConfigError(origin + ": " + e.what());
  }
  RunConfig cfg;
  for (const auto &item : items) {
    // Section open/close markers.
    if (item.name == "++" || item.name == "--")
      continue;
    std::string value;
    for (const auto &input : item.inputs)
      value += (value.empty() ? "" : ",") + input;
    try {
      apply_setting(cfg, item.fullname(), value);
      if (keys_seen)
        keys_seen->insert(item.fullname());
    } catch (const ConfigError &e) {
      throw ConfigError(origin + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path &path, std::set<std::string> *keys_seen) {
  return parse_run_config(detail::read_file(path), path.string(), keys_seen);
}

std::string to_ini(const RunConfig &cfg) {
  std::string out;
  std::string section;
  for (const auto &f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    const std::string value = f.get(cfg);
    if (value.empty())
      continue;
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + (sec == "paths" ? "\"" + value + "\"" : value) + "\n";
  }
  return out;
}

} // namespace terrain
