#include <array>
#include <bit>
#include <cstring>

#include "terrain/cloud_io.hpp"
#include "terrain/training.hpp"

namespace terrain {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void put_bytes(const std::string &s) { bytes_ += s; }
  const std::string &bytes() const { return bytes_; }

private:
  std::string bytes_;
};

class Reader {
public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string &origin() const { return origin_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw LengthError(origin_ + ": checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<std::uint32_t> dims_of(const T &t) {
  if constexpr (T::ColsAtCompileTime == 1)
    return {static_cast<std::uint32_t>(t.rows())};
  else
    return {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())};
}

void write_tensors(Writer &w, const ModelParams<float> &params, const std::string &prefix) {
  std::uint32_t count = 0;
  for_each_tensor([&](const std::string &, const auto &) { ++count; }, params);
  w.put<std::uint32_t>(count);
  for_each_tensor(
      [&](const std::string &name, const auto &t) {
        const std::string full = prefix + name;
        w.put<std::uint32_t>(static_cast<std::uint32_t>(full.size()));
        w.put_bytes(full);
        const auto dims = dims_of(t);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(dims.size()));
        for (auto d : dims)
          w.put<std::uint32_t>(d);
        for (Eigen::Index i = 0; i < t.size(); ++i)
          w.put<float>(t.data()[i]);
      },
      params);
}

void read_tensors(Reader &r, ModelParams<float> &params, const std::string &prefix) {
  std::uint32_t expected = 0;
  for_each_tensor([&](const std::string &, const auto &) { ++expected; }, params);
  const auto count = r.get<std::uint32_t>();
  if (count != expected)
    throw ShapeError(r.origin() + ": " + std::to_string(count) + " " + (prefix.empty() ? "tensors" : prefix + " tensors") +
                     ", config implies " + std::to_string(expected));
  for_each_tensor(
      [&](const std::string &name, auto &t) {
        const std::string want = prefix + name;
        const auto len = r.get<std::uint32_t>();
        const std::string got = r.get_bytes(len);
        if (got != want)
          throw ShapeError(r.origin() + ": expected tensor " + want + ", found " + got);
        const auto rank = r.get<std::uint32_t>();
        std::vector<std::uint32_t> dims(rank);
        for (auto &d : dims)
          d = r.get<std::uint32_t>();
        if (dims != dims_of(t)) {
          std::string shape;
          for (auto d : dims)
            shape += (shape.empty() ? "" : "x") + std::to_string(d);
          throw ShapeError(r.origin() + ": tensor " + want + " has shape " + shape + ", config expects " +
                           std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
        }
        for (Eigen::Index i = 0; i < t.size(); ++i)
          t.data()[i] = r.get<float>();
      },
      params);
}

std::array<std::uint32_t, 7> config_fields(const ModelConfig &c) {
  return {c.n_fps, c.n_proxy, c.k_edge, c.d_model, c.n_heads, c.n_layers, c.points_per_proxy};
}

} // namespace

void check_compatible(const ModelParams<float> &params, const ModelConfig &cfg) {
  const auto want = ModelParams<float>::zeros(cfg);
  if (want.layers.size() != params.layers.size())
    throw ShapeError("tensor encoder." + std::to_string(std::min(want.layers.size(), params.layers.size())) +
                     ".norm1.gain: checkpoint has " + std::to_string(params.layers.size()) +
                     " encoder layers, config expects " + std::to_string(want.layers.size()));
  for_each_tensor(
      [&](const std::string &name, const auto &have, const auto &expected) {
        if (have.rows() != expected.rows() || have.cols() != expected.cols())
          throw ShapeError("tensor " + name + ": checkpoint shape " + std::to_string(have.rows()) + "x" +
                           std::to_string(have.cols()) + ", config expects " + std::to_string(expected.rows()) +
                           "x" + std::to_string(expected.cols()));
      },
      params, want);
  if (params.config != cfg)
    throw ShapeError("checkpoint config differs from the requested model config (tensor shapes agree)");
}

void save_checkpoint(const TrainState &state, const std::filesystem::path &path) {
  Writer w;
  w.put_bytes("TEMD");
  w.put<std::uint16_t>(kCheckpointVersion);
  for (auto f : config_fields(state.params.config))
    w.put<std::uint32_t>(f);
  write_tensors(w, state.params, "");
  w.put<std::uint32_t>(2);
  write_tensors(w, state.adam_m, "adam_m/");
  write_tensors(w, state.adam_v, "adam_v/");
  w.put<std::uint64_t>(state.step);
  w.put<std::uint64_t>(state.seed);
  detail::write_file(path, w.bytes());
}

TrainState load_checkpoint(const std::filesystem::path &path, const std::optional<ModelConfig> &expected) {
  Reader r(detail::read_file(path), path.string());
  if (r.get_bytes(4) != "TEMD")
    throw FormatError(path.string() + ": missing TEMD magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  cfg.n_fps = r.get<std::uint32_t>();
  cfg.n_proxy = r.get<std::uint32_t>();
  cfg.k_edge = r.get<std::uint32_t>();
  cfg.d_model = r.get<std::uint32_t>();
  cfg.n_heads = r.get<std::uint32_t>();
  cfg.n_layers = r.get<std::uint32_t>();
  cfg.points_per_proxy = r.get<std::uint32_t>();
  try {
    cfg.validate();
  } catch (const ConfigError &e) {
    throw FormatError(path.string() + ": stored config invalid: " + e.what());
  }

  TrainState s;
  s.params = ModelParams<float>::zeros(cfg);
  s.adam_m = ModelParams<float>::zeros(cfg);
  s.adam_v = ModelParams<float>::zeros(cfg);
  read_tensors(r, s.params, "");
  const auto moment_sets = r.get<std::uint32_t>();
  if (moment_sets != 2)
    throw FormatError(path.string() + ": expected 2 optimizer moment sets, found " + std::to_string(moment_sets));
  read_tensors(r, s.adam_m, "adam_m/");
  read_tensors(r, s.adam_v, "adam_v/");
  s.step = r.get<std::uint64_t>();
  s.seed = r.get<std::uint64_t>();
  if (!r.done())
    throw LengthError(path.string() + ": trailing bytes after checkpoint");
  if (expected)
    check_compatible(s.params, *expected);
  return s;
}

} // namespace terrain
