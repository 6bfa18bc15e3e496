#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gsnet/checkpoint.hpp"
#include "gsnet/pgm.hpp"
#include "gsnet/error.hpp"
#include "gsnet_cli/commands.hpp"
#include "gsnet_cli/config.hpp"
#include "gsnet_cli/training.hpp"

using namespace gsnet;
using namespace gsnet::cli;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }

  // Small model and dataset so every command finishes in about a second.
  fs::path write_config(std::size_t epochs = 1) const {
    std::ostringstream c;
    c << "# tiny run\n"
      << "seed = 3\n"
      << "out_dir = " << (root / "run").string() << "\n"
      << "model.image_size = 16\nmodel.embed_dim = 8\nmodel.num_heads = 2,2\nmodel.window_size = 2\n"
      << "model.dense_layers = 1,1\nmodel.growth_rates = 4,4\nmodel.psnl_patch = 2\n"
      << "data.dir = " << (root / "data").string() << "\n"
      << "data.image_size = 16\ndata.n_per_level = 3\ndata.split = 0.67\n"
      << "train.epochs = " << epochs << "\ntrain.batch_size = 8\n";
    const auto path = root / "run.cfg";
    std::ofstream(path) << c.str();
    return path;
  }
};

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  std::vector<const char*> argv{"gsnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

}  // namespace

TEST(Config, SerializeParseRoundTrip) {
  RunConfig cfg;
  cfg.seed = 42;
  cfg.model.use_iawca = false;
  cfg.data.noise_std = 0.1;
  cfg.build.split = 0.7;
  cfg.train.lr = 0.0125;
  cfg.recall = RecallMode::kMicro;
  const std::string text = serialize_config(cfg);
  const auto back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_FALSE(back.model.use_iawca);
  EXPECT_EQ(back.train.lr, 0.0125);
  EXPECT_EQ(back.recall, RecallMode::kMicro);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("seed = 1\nmodel.bogus = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = x\n"), ConfigError);
  EXPECT_THROW(parse_config("just text\n"), ConfigError);
  EXPECT_THROW(parse_config("model.num_classes = 5\n").validate(), ConfigError);
  EXPECT_NO_THROW(parse_config("model.num_classes = 7\ntrain.half_level_head = true\n").validate());
  EXPECT_THROW(load_config("/nonexistent/gsnet.cfg"), IoError);
}

TEST(Cli, ExitCodesForBadInvocations) {
  Workspace ws("gsnet_cli_codes");
  EXPECT_EQ(run({}), kExitConfig);
  EXPECT_EQ(run({"train"}), kExitConfig);  // --config missing
  std::string err;
  EXPECT_EQ(run({"generate", "--config", (ws.root / "missing.cfg").string()}, nullptr, &err), kExitIo);
  EXPECT_NE(err.find("missing.cfg"), std::string::npos);
  std::ofstream(ws.root / "bad.cfg") << "model.nonsense = 1\n";
  EXPECT_EQ(run({"generate", "--config", (ws.root / "bad.cfg").string()}), kExitConfig);
  // train without a generated dataset
  EXPECT_EQ(run({"train", "--config", ws.write_config().string()}), kExitIo);
}

TEST(Cli, GenerateIsDeterministicAndCoversAllLevels) {
  Workspace ws("gsnet_cli_generate");
  const auto cfg = ws.write_config();
  std::string out;
  ASSERT_EQ(run({"generate", "--config", cfg.string()}, &out), kExitOk) << out;
  EXPECT_NE(out.find("level3="), std::string::npos);
  EXPECT_NE(out.find("duplicates_removed:"), std::string::npos);
  const auto first = read_file_bytes(ws.root / "data" / "manifest.csv");
  ASSERT_EQ(run({"generate", "--config", cfg.string(), "--out", (ws.root / "again").string()}), kExitOk);
  EXPECT_EQ(read_file_bytes(ws.root / "again" / "manifest.csv"), first);
  const auto d = load_dataset(ws.root / "data");
  for (auto c : d.train.level_counts(4)) EXPECT_GT(c, 0u);
  for (auto c : d.val.level_counts(4)) EXPECT_GT(c, 0u);
}

TEST(Cli, TrainEvalDiagnoseProduceArtifacts) {
  Workspace ws("gsnet_cli_pipeline");
  const auto cfg = ws.write_config();
  ASSERT_EQ(run({"generate", "--config", cfg.string()}), kExitOk);
  std::string out, err;
  ASSERT_EQ(run({"train", "--config", cfg.string()}, &out, &err), kExitOk) << err;
  const auto rundir = ws.root / "run";
  for (const char* f : {"config.txt", "train_log.csv", "final.ckpt", "best.ckpt"}) EXPECT_TRUE(fs::exists(rundir / f)) << f;
  EXPECT_EQ(out.rfind(kLogHeader, 0), 0u);

  ASSERT_EQ(run({"eval", "--config", cfg.string()}, &out, &err), kExitOk) << err;
  auto j = nlohmann::json::parse(out);
  for (const char* key : {"acc", "map", "recall", "precision", "f1", "evs", "mse", "r2", "confusion"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(fs::exists(rundir / "eval.json"));

  ASSERT_EQ(run({"diagnose", "--config", cfg.string()}, &out, &err), kExitOk) << err;
  for (const char* f : {"grad_check.json", "independence.json", "attention_encoder.pgm", "attention_swin.pgm",
                        "attention_guided.pgm"}) {
    EXPECT_TRUE(fs::exists(rundir / f)) << f;
  }
  auto enc = read_pgm(rundir / "attention_encoder.pgm");
  EXPECT_EQ(enc.width, 2u);  // final map side for a 16px input
  auto grads = nlohmann::json::parse(std::string(
      [&] { auto b = read_file_bytes(rundir / "grad_check.json"); return std::string(b.begin(), b.end()); }()));
  EXPECT_FALSE(grads.empty());

  EXPECT_EQ(run({"eval", "--config", cfg.string(), "--checkpoint", (ws.root / "none.ckpt").string()}), kExitIo);
}

TEST(Cli, ZeroEpochsWritesInitialWeightsOnly) {
  Workspace ws("gsnet_cli_zero");
  const auto cfg = ws.write_config(0);
  ASSERT_EQ(run({"generate", "--config", cfg.string()}), kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--seed", "5"}), kExitOk);
  EXPECT_TRUE(fs::exists(ws.root / "run" / "final.ckpt"));
  EXPECT_FALSE(fs::exists(ws.root / "run" / "best.ckpt"));
  auto params = build_model(load_config(cfg).model, 5).parameters();
  EXPECT_EQ(read_file_bytes(ws.root / "run" / "final.ckpt"), encode_checkpoint(params));
}

TEST(Cli, TrainingIsByteReproducible) {
  Workspace ws("gsnet_cli_repro");
  const auto cfg = ws.write_config();
  ASSERT_EQ(run({"generate", "--config", cfg.string()}), kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (ws.root / "a").string()}), kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (ws.root / "b").string()}), kExitOk);
  for (const char* f : {"train_log.csv", "final.ckpt"})
    EXPECT_EQ(read_file_bytes(ws.root / "a" / f), read_file_bytes(ws.root / "b" / f)) << f;
}

TEST(Training, LevelClassMapping) {
  EXPECT_EQ(level_to_class(3, false), 3u);
  EXPECT_EQ(level_to_class(3, true), 6u);
  EXPECT_EQ(class_to_level(5, true), 2.5);
  EXPECT_EQ(class_to_level(2, false), 2.0);
  EXPECT_EQ(format_log_line({2, 10, 0.001, 0.5, 0.75}), "2,10,0.00100000,0.500000,0.750000");
}

TEST(Ablation, VariantTable) {
  const auto& v = ablation_variants();
  ASSERT_EQ(v.size(), 4u);
  EXPECT_FALSE(v[0].triple);
  EXPECT_FALSE(v[1].guided);
  EXPECT_FALSE(v[2].iawca);
  EXPECT_TRUE(v[3].guided && v[3].triple && v[3].iawca);
}
