#include "terrain/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "terrain/cloud_io.hpp"
#include "terrain/gradcheck.hpp"
#include "terrain/run_config.hpp"

namespace terrain::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public Error {
public:
  using Error::Error;
};

// Options shared by every subcommand. Precedence: config file, then --set,
// then dedicated flags.
struct Common {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::map<std::string, std::optional<std::string>> flags; // config key -> flag value
};

void add_common(CLI::App *sub, Common &c) {
  sub->add_option("-c,--config", c.config, "INI run config (sections dataset, grid, model, loss, train, eval, paths)");
  sub->add_option("--set", c.sets, "Override one config key, e.g. --set model.d_model=32 (repeatable)");
  sub->add_option("--seed", c.flags["seed"], "Seed (config key seed)");
}

void add_flag_key(CLI::App *sub, Common &c, const std::string &flag, const std::string &key, const std::string &help) {
  sub->add_option(flag, c.flags[key], help + " (config key " + key + ")");
}

struct Resolved {
  RunConfig cfg;
  std::set<std::string> keys; // keys given explicitly anywhere
};

Resolved resolve(const Common &c) {
  Resolved r;
  if (c.config)
    r.cfg = load_run_config(*c.config, &r.keys);
  for (const auto &s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw UsageError("--set expects key=value, got '" + s + "'");
    apply_setting(r.cfg, s.substr(0, eq), s.substr(eq + 1));
    r.keys.insert(s.substr(0, eq));
  }
  for (const auto &[key, value] : c.flags)
    if (value) {
      apply_setting(r.cfg, key, *value);
      r.keys.insert(key);
    }
  r.cfg.validate();
  return r;
}

bool any_model_key(const std::set<std::string> &keys) {
  return std::any_of(keys.begin(), keys.end(), [](const std::string &k) { return k.starts_with("model."); });
}

fs::path require_path(const fs::path &p, const std::string &what) {
  if (p.empty())
    throw UsageError("missing " + what);
  return p;
}

std::vector<fs::path> sample_dirs(const fs::path &root) {
  if (fs::exists(root / "manifest.json"))
    return {root};
  if (!fs::is_directory(root))
    throw IoError(root.string() + ": not a directory");
  std::vector<fs::path> dirs;
  for (const auto &entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty())
    throw FormatError(root.string() + ": no sample directories");
  return dirs;
}

std::vector<TrainingSample> load_samples(const fs::path &root) {
  std::vector<TrainingSample> samples;
  for (const auto &dir : sample_dirs(root))
    samples.push_back(read_sample(dir));
  return samples;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Grid layout sidecar for native-format scenes.

void write_grid_geometry(const VoxelGridGeometry &g, const fs::path &path) {
  json j = {{"dims", {g.dims[0], g.dims[1], g.dims[2]}},
            {"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
            {"resolution", g.resolution}};
  detail::write_file(path, j.dump(2) + "\n");
}

VoxelGridGeometry read_grid_geometry(const fs::path &path) {
  try {
    const json j = json::parse(detail::read_file(path));
    VoxelGridGeometry g;
    for (int i = 0; i < 3; ++i) {
      g.dims[i] = j.at("dims").at(i).get<std::uint32_t>();
      g.origin[i] = j.at("origin").at(i).get<double>();
    }
    g.resolution = j.at("resolution").get<double>();
    g.validate();
    return g;
  } catch (const json::exception &e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// gen-data

struct SceneFiles {
  std::string id;
  fs::path scan, scan_labels, voxels, voxel_labels, masks, grid;
  bool kitti = false;
};

std::vector<SceneFiles> discover_scenes(const fs::path &input) {
  if (!fs::is_directory(input))
    throw IoError(input.string() + ": not a directory");
  std::vector<SceneFiles> scenes;
  if (fs::is_directory(input / "velodyne")) {
    for (const auto &entry : fs::directory_iterator(input / "velodyne")) {
      if (entry.path().extension() != ".bin")
        continue;
      SceneFiles s;
      s.kitti = true;
      s.id = entry.path().stem().string();
      s.scan = entry.path();
      s.scan_labels = input / "labels" / (s.id + ".label");
      s.voxels = input / "voxels" / (s.id + ".bin");
      s.voxel_labels = input / "voxels" / (s.id + ".label");
      s.masks = input / "masks" / (s.id + ".json");
      scenes.push_back(s);
    }
  } else {
    for (const auto &entry : fs::directory_iterator(input)) {
      if (entry.path().extension() != ".tepc")
        continue;
      SceneFiles s;
      s.id = entry.path().stem().string();
      s.scan = entry.path();
      s.voxels = input / (s.id + ".voxel.bin");
      s.voxel_labels = input / (s.id + ".voxel.label");
      s.masks = input / (s.id + ".masks.json");
      s.grid = input / (s.id + ".grid.json");
      scenes.push_back(s);
    }
  }
  std::sort(scenes.begin(), scenes.end(), [](const SceneFiles &a, const SceneFiles &b) { return a.id < b.id; });
  return scenes;
}

int cmd_gen_data(const Common &common, const std::string &input, std::ostream &out, std::ostream &err) {
  const Resolved r = resolve(common);
  const fs::path out_dir = require_path(r.cfg.paths.out, "--out");
  const auto scenes = discover_scenes(input);

  std::size_t accepted = 0, rejected = 0, failed = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const SceneFiles &s = scenes[i];
    try {
      PointCloud scan;
      VoxelGridGeometry geometry = r.cfg.grid;
      if (s.kitti) {
        scan = read_kitti_labels(s.scan_labels, read_kitti_velodyne(s.scan));
      } else {
        scan = read_native_cloud(s.scan);
        if (fs::exists(s.grid))
          geometry = read_grid_geometry(s.grid);
      }
      const VoxelGrid grid = read_kitti_voxels(s.voxels, s.voxel_labels, geometry);
      std::optional<BevMaskSet> masks;
      if (r.cfg.dataset.mask_source == MaskSource::Precomputed) {
        if (!fs::exists(s.masks))
          throw FormatError(s.masks.string() + ": mask file required by dataset.mask_source = precomputed");
        masks = read_masks(s.masks);
      }
      const TrainingSample sample = build_sample(scan, grid, r.cfg.dataset, masks, s.id, r.cfg.seed + i);
      write_sample(sample, out_dir / s.id);
      ++accepted;
    } catch (const SampleRejected &e) {
      err << "rejected " << s.id << ": " << e.what() << "\n";
      ++rejected;
    } catch (const Error &e) {
      err << "warning: " << s.id << ": " << e.what() << "\n";
      ++failed;
    }
  }
  out << "accepted " << accepted << " rejected " << rejected << " failed " << failed << "\n";
  if (accepted == 0) {
    err << "no samples written\n";
    return kData;
  }
  return kOk;
}

// synth

int cmd_synth(const Common &common, const std::string &kind_name, std::size_t count, bool raw, std::ostream &out) {
  SceneKind kind;
  try {
    kind = parse_scene_kind(kind_name);
  } catch (const ConfigError &e) {
    throw UsageError(e.what());
  }
  const Resolved r = resolve(common);
  const fs::path out_dir = require_path(r.cfg.paths.out, "--out");
  const SynthParams params;
  for (std::size_t i = 0; i < count; ++i) {
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "-%03zu", i);
    const std::string id = kind_name + suffix;
    const std::uint64_t seed = r.cfg.seed + i;
    const SynthScene scene = synth_scene(kind, params, seed);
    if (raw) {
      fs::create_directories(out_dir);
      write_native_cloud(scene.scan, out_dir / (id + ".tepc"));
      write_kitti_voxels(scene.grid, out_dir / (id + ".voxel.bin"), out_dir / (id + ".voxel.label"));
      write_grid_geometry(scene.grid.geometry, out_dir / (id + ".grid.json"));
    } else {
      const TrainingSample sample = build_sample(scene.scan, scene.grid, r.cfg.dataset, std::nullopt, id, seed);
      write_sample(sample, out_dir / id);
    }
  }
  out << "wrote " << count << (raw ? " raw scenes" : " samples") << " to " << out_dir.string() << "\n";
  return kOk;
}

// train

int cmd_train(const Common &common, const std::optional<std::string> &resume, const std::optional<std::string> &trace,
              bool quiet, std::ostream &out, std::ostream &err) {
  const Resolved r = resolve(common);
  const fs::path data = require_path(r.cfg.paths.data, "--data");
  const fs::path ckpt = require_path(r.cfg.paths.checkpoint, "--out");
  const fs::path trace_path = trace ? fs::path(*trace) : fs::path(ckpt.string() + ".trace.tsv");
  const auto samples = load_samples(data);

  TrainState state;
  if (resume) {
    state = load_checkpoint(*resume, any_model_key(r.keys) ? std::optional<ModelConfig>(r.cfg.model) : std::nullopt);
  } else {
    state = TrainState::initial(r.cfg.model, r.cfg.seed);
  }
  TrainOptions options = r.cfg.train;
  options.seed = r.cfg.seed;

  const std::uint64_t first_step = state.step;
  TrainResult result = train(samples, std::move(state), r.cfg.loss, options, [&](std::uint64_t step, double loss) {
    if (!quiet && step % 100 == 0)
      err << "step " << step << " loss " << format_double(loss) << "\n";
  });

  std::string trace_text = "step\tloss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "%llu\t%.17g\n", static_cast<unsigned long long>(first_step + i),
                  result.loss_trace[i]);
    trace_text += line;
  }
  save_checkpoint(result.state, ckpt);
  detail::write_file(trace_path, trace_text);
  if (result.diverged) {
    err << "training diverged at " << result.diagnostic << "; checkpoint keeps step " << result.state.step << "\n";
    return kNumeric;
  }

  double final_loss = 0.0;
  for (const auto &s : samples)
    final_loss += sample_loss(s, result.state.params, r.cfg.loss);
  final_loss /= static_cast<double>(samples.size());
  out << "step " << result.state.step << " final loss " << format_double(final_loss) << "\n";
  return kOk;
}

// predict

int cmd_predict(const Common &common, const std::string &input, std::ostream &out) {
  const Resolved r = resolve(common);
  const fs::path ckpt = require_path(r.cfg.paths.checkpoint, "--checkpoint");
  const fs::path prefix = require_path(r.cfg.paths.out, "--out");
  const TrainState state =
      load_checkpoint(ckpt, any_model_key(r.keys) ? std::optional<ModelConfig>(r.cfg.model) : std::nullopt);

  std::optional<TrainingSample> sample;
  PointCloud cloud;
  std::uint64_t seed = r.cfg.seed;
  if (fs::is_directory(input)) {
    sample = read_sample(input);
    cloud = sample->input;
    if (!r.keys.count("seed"))
      seed = sample->seed;
  } else {
    cloud = read_native_cloud(input);
    cloud.labels.reset();
  }

  const PointCloud pred = forward(cloud, state.params, seed);
  const PointCloud extended = concatenate(cloud, pred);
  if (!prefix.parent_path().empty())
    fs::create_directories(prefix.parent_path());
  const std::string base = prefix.string();
  write_native_cloud(pred, base + ".pred.tepc");
  write_native_cloud(extended, base + ".extended.tepc");
  write_ply({{&pred, colors::kPrediction}}, base + ".pred.ply");
  write_ply({{&cloud, colors::kInput}, {&pred, colors::kPrediction}}, base + ".extended.ply");
  if (sample)
    write_ply({{&cloud, colors::kInput}, {&pred, colors::kPrediction}, {&sample->target, colors::kGroundTruth}},
              base + ".scene.ply");
  out << "predicted " << pred.points.size() << " points; extended cloud has " << extended.points.size()
      << " points\n";
  return kOk;
}

// eval

int cmd_eval(const Common &common, const std::vector<std::string> &preds, const std::vector<std::string> &samples,
             std::ostream &out, std::ostream &err) {
  if (preds.size() != samples.size())
    throw UsageError("--pred and --sample must be given the same number of times");
  if (preds.empty())
    throw UsageError("nothing to evaluate: pass --pred and --sample");
  const Resolved r = resolve(common);
  const fs::path prefix = require_path(r.cfg.paths.out, "--out");

  std::vector<SceneMetrics> rows;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    SceneMetrics row;
    row.scene_id = fs::path(samples[i]).filename().string();
    try {
      const TrainingSample sample = read_sample(samples[i]);
      row.scene_id = sample.source_id;
      PointCloud pred = read_native_cloud(preds[i]);
      pred.labels.reset();
      row = evaluate_scene(pred, sample, r.cfg.eval);
    } catch (const Error &e) {
      row.error = e.what();
      err << "scene " << row.scene_id << ": " << e.what() << "\n";
    }
    rows.push_back(std::move(row));
  }
  const MetricReport report = assemble_report(std::move(rows), r.cfg.eval.edges);
  const std::string table = report_to_table(report);
  if (!prefix.parent_path().empty())
    fs::create_directories(prefix.parent_path());
  detail::write_file(prefix.string() + ".json", report_to_json(report));
  detail::write_file(prefix.string() + ".txt", table);
  out << table;
  return report.has_errors() ? kData : kOk;
}

// gradcheck

int cmd_gradcheck(const Common &common, std::size_t draws, const std::optional<std::string> &corrupt, std::ostream &out,
                  std::ostream &err) {
  const Resolved r = resolve(common);
  GradCheckOptions options;
  if (any_model_key(r.keys))
    options.model = r.cfg.model;
  options.draws = draws;
  options.seed = r.cfg.seed;
  options.corrupt_tensor = corrupt;
  const GradCheckReport report = gradient_check(options);

  char line[160];
  std::snprintf(line, sizeof line, "%-32s %12s %8s %8s\n", "tensor", "max_rel_err", "checked", "skipped");
  out << line;
  for (const auto &t : report.tensors) {
    std::snprintf(line, sizeof line, "%-32s %12.3e %8zu %8zu\n", t.name.c_str(), t.max_rel_error, t.checked,
                  t.skipped);
    out << line;
  }
  std::snprintf(line, sizeof line, "max relative error %.3e in %s (threshold %.0e, %zu draws)\n", report.max_rel_error,
                report.worst_tensor.c_str(), options.threshold, options.draws);
  out << line;
  if (!report.passed) {
    err << "gradient check failed: worst tensor " << report.worst_tensor << "\n";
    return kNumeric;
  }
  out << "gradient check passed\n";
  return kOk;
}

} // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Terrain extension: data generation, training, prediction and evaluation", "terrain"};
  app.require_subcommand(1);

  Common gen_c, synth_c, train_c, predict_c, eval_c, grad_c;

  auto *gen = app.add_subcommand("gen-data", "Build training samples from labeled scans and voxel grids");
  add_common(gen, gen_c);
  std::string gen_input;
  gen->add_option("-i,--input", gen_input, "Scene directory (KITTI layout or native .tepc files)")->required();
  add_flag_key(gen, gen_c, "-o,--out", "paths.out", "Output directory for sample directories");
  add_flag_key(gen, gen_c, "--d-y", "dataset.d_y", "Buffer distance in meters");
  add_flag_key(gen, gen_c, "--mask-source", "dataset.mask_source", "precomputed or cluster");

  auto *synth = app.add_subcommand("synth", "Write synthetic road scenes");
  add_common(synth, synth_c);
  std::string synth_kind;
  std::size_t synth_count = 1;
  bool synth_raw = false;
  synth->add_option("-k,--kind", synth_kind, "t-intersection, l-corner or straight")->required();
  synth->add_option("-n,--count", synth_count, "Number of scenes")->capture_default_str();
  synth->add_flag("--raw", synth_raw, "Write scan and voxel files for gen-data instead of samples");
  add_flag_key(synth, synth_c, "-o,--out", "paths.out", "Output directory");
  add_flag_key(synth, synth_c, "--d-y", "dataset.d_y", "Buffer distance in meters");

  auto *tr = app.add_subcommand("train", "Train the model on sample directories");
  add_common(tr, train_c);
  std::optional<std::string> resume, trace;
  bool quiet = false;
  add_flag_key(tr, train_c, "-d,--data", "paths.data", "Sample directory or directory of samples");
  add_flag_key(tr, train_c, "-o,--out", "paths.checkpoint", "Checkpoint to write");
  add_flag_key(tr, train_c, "--steps", "train.steps", "Optimizer steps");
  add_flag_key(tr, train_c, "--lr", "train.lr", "Adam learning rate");
  tr->add_option("--resume", resume, "Continue from this checkpoint");
  tr->add_option("--trace", trace, "Loss trace file (default <out>.trace.tsv)");
  tr->add_flag("-q,--quiet", quiet, "No progress lines");

  auto *pr = app.add_subcommand("predict", "Predict terrain for one input cloud");
  add_common(pr, predict_c);
  std::string pr_input;
  add_flag_key(pr, predict_c, "-m,--checkpoint", "paths.checkpoint", "Trained checkpoint");
  pr->add_option("-i,--input", pr_input, "Sample directory or native .tepc cloud")->required();
  add_flag_key(pr, predict_c, "-o,--out", "paths.out",
               "Output prefix: <out>.pred.{tepc,ply}, <out>.extended.{tepc,ply}, <out>.scene.ply");

  auto *ev = app.add_subcommand("eval", "Score predictions against sample targets");
  add_common(ev, eval_c);
  std::vector<std::string> ev_preds, ev_samples;
  ev->add_option("-p,--pred", ev_preds, "Predicted cloud (.tepc), paired with --sample by position");
  ev->add_option("-s,--sample", ev_samples, "Sample directory holding the ground truth");
  add_flag_key(ev, eval_c, "-o,--out", "paths.out", "Report prefix: <out>.json and <out>.txt");
  add_flag_key(ev, eval_c, "--membership", "eval.membership", "either, proximity or mask");
  add_flag_key(ev, eval_c, "--rho", "eval.rho", "Proximity tolerance in meters, 0 = voxel resolution");

  auto *gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  add_common(gc, grad_c);
  std::size_t draws = 20;
  std::optional<std::string> corrupt;
  gc->add_option("--draws", draws, "Random draws")->capture_default_str();
  gc->add_option("--corrupt", corrupt, "Test hook: perturb the analytic gradient of this tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_c, gen_input, out, err);
    if (synth->parsed())
      return cmd_synth(synth_c, synth_kind, synth_count, synth_raw, out);
    if (tr->parsed())
      return cmd_train(train_c, resume, trace, quiet, out, err);
    if (pr->parsed())
      return cmd_predict(predict_c, pr_input, out);
    if (ev->parsed())
      return cmd_eval(eval_c, ev_preds, ev_samples, out, err);
    if (gc->parsed())
      return cmd_gradcheck(grad_c, draws, corrupt, out, err);
  } catch (const UsageError &e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError &e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error &e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

} // namespace terrain::cli
