#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "terrain/cli.hpp"
#include "terrain/cloud_io.hpp"
#include "terrain/dataset.hpp"
#include "terrain/error.hpp"
#include "terrain/run_config.hpp"
#include "terrain/training.hpp"

using namespace terrain;
using namespace terrain::test;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "terrain");
  std::vector<const char *> argv;
  for (const auto &a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// A small model keeps CLI training fast.
const std::vector<std::string> kSmallModel{"--set", "model.n_fps=64", "--set", "model.n_proxy=8",
                                           "--set", "model.d_model=16"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmallModel.begin(), kSmallModel.end());
  return args;
}

std::string slurp(const fs::path &p) { return detail::read_file(p); }

std::size_t ply_vertices(const fs::path &p) {
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line))
    if (line.starts_with("element vertex "))
      return std::stoul(line.substr(15));
  return 0;
}

} // namespace

// Run config

TEST(RunConfig, ParsesSections) {
  const RunConfig c = parse_run_config("seed = 9\n[dataset]\nd_y = 2.5\nroad_labels = 40 44\n[model]\nd_model = 32\n"
                                       "n_heads = 2\n[loss]\ndelta = 3\n[train]\nsteps = 7\n[eval]\nmembership = mask\n"
                                       "[paths]\ndata = \"a b/c\"\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.dataset.d_y, 2.5);
  EXPECT_EQ(c.model.d_model, 32u);
  EXPECT_EQ(c.model.n_heads, 2u);
  EXPECT_EQ(c.loss.delta, 3.0);
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(c.eval.membership, Membership::Mask);
  EXPECT_EQ(c.paths.data, fs::path("a b/c"));
  EXPECT_EQ(c.model.n_fps, ModelConfig{}.n_fps);
}

TEST(RunConfig, RejectsUnknownAndInvalid) {
  EXPECT_THROW(parse_run_config("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nd_model = many\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[loss]\ndelta = 0.5\n").validate(), ConfigError);
  RunConfig c;
  EXPECT_THROW(apply_setting(c, "model.nope", "1"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.ini"), Error);
}

TEST(RunConfig, IniRoundTrip) {
  RunConfig c;
  c.seed = 123456789012345ull;
  c.dataset.d_y = 0.1;
  c.loss.alpha = 1.0 / 3.0;
  c.train.lr = 3e-4;
  c.eval.edges = {0.5, 1.0};
  c.paths = {"data", "out dir/x", "m.ckpt"};
  c.dataset.crop_box = Aabb(Eigen::Vector3f(-1, -2, -3), Eigen::Vector3f(4, 5, 6.5f));
  std::set<std::string> seen;
  const RunConfig back = parse_run_config(to_ini(c), "roundtrip", &seen);
  EXPECT_EQ(to_ini(back), to_ini(c));
  EXPECT_EQ(back.loss.alpha, c.loss.alpha);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.paths, c.paths);
  ASSERT_TRUE(back.dataset.crop_box);
  EXPECT_EQ(back.dataset.crop_box->max, c.dataset.crop_box->max);
  for (const auto &key : run_config_keys())
    EXPECT_TRUE(seen.count(key)) << key;
}

// Common behaviour

TEST(Cli, HelpListsFlags) {
  const Outcome top = run_cli({"--help"});
  EXPECT_EQ(top.code, cli::kOk);
  for (const char *sub : {"gen-data", "synth", "train", "predict", "eval", "gradcheck"})
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  const Outcome train = run_cli({"train", "--help"});
  EXPECT_EQ(train.code, cli::kOk);
  for (const char *flag : {"--config", "--set", "--seed", "--data", "--out", "--steps", "--lr", "--resume", "--trace",
                           "--quiet"})
    EXPECT_NE(train.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"synth", "-k", "l-corner", "--bogus"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"synth", "-k", "roundabout", "-o", "/tmp/never"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"synth", "-k", "l-corner", "--set", "model.nope=1", "-o", "/tmp/never"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"synth", "-k", "l-corner", "--set", "noequals", "-o", "/tmp/never"}).code, cli::kUsage);
}

TEST(Cli, FlagsWinOverConfigAndSet) {
  TempDir dir;
  detail::write_file(dir / "run.ini", "[dataset]\nd_y = 3\n[paths]\nout = \"" + (dir / "from_config").string() + "\"\n");
  ASSERT_EQ(run_cli({"synth", "-k", "l-corner", "-c", (dir / "run.ini").string(), "--set", "dataset.d_y=2", "--d-y", "1.5",
                 "-o", (dir / "s").string()})
                .code,
            cli::kOk);
  EXPECT_FALSE(fs::exists(dir / "from_config"));
  EXPECT_EQ(read_sample(dir / "s" / "l-corner-000").d_y, 1.5);
  ASSERT_EQ(run_cli({"synth", "-k", "l-corner", "-c", (dir / "run.ini").string(), "--set", "dataset.d_y=2"}).code,
            cli::kOk);
  EXPECT_EQ(read_sample(dir / "from_config" / "l-corner-000").d_y, 2.0);
}

// synth

TEST(CliSynth, CountZeroWritesNothing) {
  TempDir dir;
  EXPECT_EQ(run_cli({"synth", "-k", "straight", "-n", "0", "-o", (dir / "s").string()}).code, cli::kOk);
  EXPECT_FALSE(fs::exists(dir / "s") && !fs::is_empty(dir / "s"));
}

TEST(CliSynth, SameSeedIsByteIdentical) {
  TempDir dir;
  for (const char *o : {"a", "b"})
    ASSERT_EQ(run_cli({"synth", "-k", "t-intersection", "-n", "2", "--seed", "4", "-o", (dir / o).string()}).code,
              cli::kOk);
  for (const char *id : {"t-intersection-000", "t-intersection-001"})
    for (const char *f : {"manifest.json", "input.tepc", "target.tepc", "masks.json"})
      EXPECT_EQ(slurp(dir / "a" / id / f), slurp(dir / "b" / id / f)) << id << "/" << f;
  ASSERT_EQ(run_cli({"synth", "-k", "t-intersection", "--seed", "5", "-o", (dir / "c").string()}).code, cli::kOk);
  EXPECT_NE(slurp(dir / "a" / "t-intersection-000" / "input.tepc"),
            slurp(dir / "c" / "t-intersection-000" / "input.tepc"));
}

TEST(CliSynth, LCornerTargetsLieInOccludedArm) {
  TempDir dir;
  ASSERT_EQ(run_cli({"synth", "-k", "l-corner", "--seed", "7", "-o", dir.path().string()}).code, cli::kOk);
  const TrainingSample s = read_sample(dir / "l-corner-000");
  ASSERT_FALSE(s.target.empty());
  double max_input_y = -1e9;
  for (const auto &p : s.input.points)
    max_input_y = std::max<double>(max_input_y, p.y());
  std::size_t beyond = 0;
  for (const auto &p : s.target.points)
    beyond += p.y() > max_input_y ? 1 : 0;
  EXPECT_GT(beyond, s.target.size() / 2);
}

// gen-data

TEST(CliGenData, RejectsSceneWithoutTargets) {
  TempDir dir;
  const std::string raw = (dir / "raw").string();
  ASSERT_EQ(run_cli({"synth", "-k", "straight", "--raw", "-o", raw}).code, cli::kOk);
  ASSERT_EQ(run_cli({"synth", "-k", "l-corner", "-n", "2", "--raw", "--seed", "5", "-o", raw}).code, cli::kOk);
  const Outcome r = run_cli({"gen-data", "-i", raw, "-o", (dir / "out").string(), "--d-y", "1.25"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("accepted 2 rejected 1"), std::string::npos) << r.out;
  std::size_t written = 0;
  for (const auto &entry : fs::directory_iterator(dir / "out")) {
    ++written;
    const auto manifest = nlohmann::json::parse(slurp(entry.path() / "manifest.json"));
    EXPECT_EQ(manifest.at("d_y").get<double>(), 1.25);
  }
  EXPECT_EQ(written, 2u);
  EXPECT_FALSE(fs::exists(dir / "out" / "straight-000"));
}

TEST(CliGenData, EmptyInputFails) {
  TempDir dir;
  fs::create_directories(dir / "raw");
  const Outcome r = run_cli({"gen-data", "-i", (dir / "raw").string(), "-o", (dir / "out").string()});
  EXPECT_EQ(r.code, cli::kData);
  EXPECT_NE(r.out.find("accepted 0"), std::string::npos);
}

TEST(CliGenData, PrecomputedMasksRequireFiles) {
  TempDir dir;
  const std::string raw = (dir / "raw").string();
  ASSERT_EQ(run_cli({"synth", "-k", "l-corner", "--raw", "-o", raw}).code, cli::kOk);
  const Outcome r = run_cli({"gen-data", "-i", raw, "-o", (dir / "out").string(), "--mask-source", "precomputed"});
  EXPECT_EQ(r.code, cli::kData);
  EXPECT_NE(r.err.find("masks.json"), std::string::npos) << r.err;
}

// train / predict / eval

class CliPipeline : public ::testing::Test {
protected:
  void SetUp() override {
    ASSERT_EQ(run_cli({"synth", "-k", "l-corner", "-n", "2", "--seed", "3", "-o", (dir / "data").string()}).code,
              cli::kOk);
  }
  std::string data() const { return (dir / "data").string(); }
  std::string sample(int i) const { return (dir / "data" / ("l-corner-00" + std::to_string(i))).string(); }
  TempDir dir;
};

TEST_F(CliPipeline, ZeroStepsSavesInitialization) {
  const std::string ckpt = (dir / "m.ckpt").string();
  const Outcome r = run_cli(with_small({"train", "-d", data(), "-o", ckpt, "--steps", "0", "--seed", "11"}));
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const TrainState s = load_checkpoint(ckpt);
  ModelConfig cfg;
  cfg.n_fps = 64;
  cfg.n_proxy = 8;
  cfg.d_model = 16;
  const TrainState init = TrainState::initial(cfg, 11);
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(s.params.head.weight, init.params.head.weight);
  EXPECT_EQ(s.params.layers[2].ffn1.weight, init.params.layers[2].ffn1.weight);
  EXPECT_EQ(slurp(ckpt + ".trace.tsv"), "step\tloss\n");
}

TEST_F(CliPipeline, ResumeContinuesStepCounter) {
  const std::string a = (dir / "a.ckpt").string(), b = (dir / "b.ckpt").string(), c = (dir / "c.ckpt").string();
  ASSERT_EQ(run_cli(with_small({"train", "-q", "-d", data(), "-o", a, "--steps", "6"})).code, cli::kOk);
  const Outcome r = run_cli({"train", "-q", "-d", data(), "-o", b, "--steps", "4", "--resume", a});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("step 10 final loss"), std::string::npos) << r.out;
  EXPECT_TRUE(slurp(b + ".trace.tsv").starts_with("step\tloss\n6\t"));
  ASSERT_EQ(run_cli(with_small({"train", "-q", "-d", data(), "-o", c, "--steps", "10"})).code, cli::kOk);
  EXPECT_EQ(slurp(b), slurp(c));
}

TEST_F(CliPipeline, ResumeWithMismatchedModelIsShapeError) {
  const std::string a = (dir / "a.ckpt").string();
  ASSERT_EQ(run_cli(with_small({"train", "-q", "-d", data(), "-o", a, "--steps", "1"})).code, cli::kOk);
  const Outcome r = run_cli({"train", "-q", "-d", data(), "-o", (dir / "b.ckpt").string(), "--resume", a, "--set",
                         "model.d_model=32"});
  EXPECT_EQ(r.code, cli::kData);
  EXPECT_NE(r.err.find("edge.0.weight"), std::string::npos) << r.err;
}

TEST_F(CliPipeline, PredictWritesShapes) {
  const std::string ckpt = (dir / "m.ckpt").string();
  ASSERT_EQ(run_cli(with_small({"train", "-q", "-d", data(), "-o", ckpt, "--steps", "3"})).code, cli::kOk);
  const std::string prefix = (dir / "pred" / "s0").string();
  const Outcome r = run_cli({"predict", "-m", ckpt, "-i", sample(0), "-o", prefix});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const TrainingSample s = read_sample(sample(0));
  const std::size_t m = 16; // n_proxy 8 x 2 points per proxy
  EXPECT_EQ(read_native_cloud(prefix + ".pred.tepc").size(), m);
  EXPECT_EQ(read_native_cloud(prefix + ".extended.tepc").size(), s.input.size() + m);
  EXPECT_EQ(ply_vertices(prefix + ".pred.ply"), m);
  EXPECT_EQ(ply_vertices(prefix + ".extended.ply"), s.input.size() + m);
  EXPECT_EQ(ply_vertices(prefix + ".scene.ply"), s.input.size() + m + s.target.size());

  // A bare cloud works too, and fixed seeds give identical files.
  const std::string again = (dir / "pred" / "again").string();
  ASSERT_EQ(run_cli({"predict", "-m", ckpt, "-i", sample(0) + "/input.tepc", "-o", again, "--seed", "3"}).code, cli::kOk);
  ASSERT_EQ(run_cli({"predict", "-m", ckpt, "-i", sample(0) + "/input.tepc", "-o", again + "2", "--seed", "3"}).code,
            cli::kOk);
  EXPECT_EQ(slurp(again + ".pred.tepc"), slurp(again + "2.pred.tepc"));
  EXPECT_FALSE(fs::exists(again + ".scene.ply"));

  const Outcome bad = run_cli({"predict", "-m", ckpt, "-i", sample(0), "-o", prefix, "--set", "model.d_model=32"});
  EXPECT_EQ(bad.code, cli::kData);
  EXPECT_NE(bad.err.find("tensor"), std::string::npos) << bad.err;
}

TEST_F(CliPipeline, EvalPerfectPredictionAndOrdering) {
  const std::string report = (dir / "report").string();
  // Ground truth fed back as the prediction, given in reverse id order.
  const Outcome r = run_cli({"eval", "-p", sample(1) + "/target.tepc", "-s", sample(1), "-p", sample(0) + "/target.tepc",
                         "-s", sample(0), "-o", report});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = nlohmann::json::parse(slurp(report + ".json"));
  const auto &rows = j.at("rows");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("scene_id").get<std::string>(), "l-corner-000");
  EXPECT_EQ(rows[1].at("scene_id").get<std::string>(), "l-corner-001");
  for (const auto &row : rows) {
    EXPECT_EQ(row.at("acc").get<double>(), 100.0);
    EXPECT_EQ(row.at("cd_pt").get<double>(), 0.0);
    EXPECT_EQ(row.at("histogram").at(0).get<double>(), 100.0);
  }
  const std::string table = slurp(report + ".txt");
  EXPECT_EQ(table, r.out);
  EXPECT_LT(table.find("l-corner-000"), table.find("l-corner-001"));
}

TEST_F(CliPipeline, EvalMissingGroundTruthIsErrorRow) {
  const std::string report = (dir / "report").string();
  const Outcome r = run_cli({"eval", "-p", sample(0) + "/target.tepc", "-s", sample(0), "-p", sample(0) + "/target.tepc",
                         "-s", (dir / "missing").string(), "-o", report});
  EXPECT_EQ(r.code, cli::kData);
  const auto j = nlohmann::json::parse(slurp(report + ".json"));
  ASSERT_EQ(j.at("rows").size(), 2u);
  std::size_t errors = 0;
  for (const auto &row : j.at("rows"))
    errors += row.contains("error") ? 1 : 0;
  EXPECT_EQ(errors, 1u);
  EXPECT_EQ(run_cli({"eval", "-p", "x.tepc", "-o", report}).code, cli::kUsage);
}

// gradcheck

TEST(CliGradcheck, PassesAndReportsEveryTensor) {
  const Outcome r = run_cli({"gradcheck", "--draws", "2"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("head.weight"), std::string::npos);
  EXPECT_NE(r.out.find("encoder.0.attn.key.bias"), std::string::npos);
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("gradient check passed"), std::string::npos);
}

TEST(CliGradcheck, CorruptedTensorFails) {
  const Outcome r = run_cli({"gradcheck", "--draws", "1", "--corrupt", "pos.1.weight"});
  EXPECT_EQ(r.code, cli::kNumeric);
  EXPECT_NE(r.err.find("worst tensor pos.1.weight"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"gradcheck", "--draws", "1", "--corrupt", "nothing"}).code, cli::kUsage);
}
