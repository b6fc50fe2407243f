#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "commands.hpp"
#include "scgen/parallel.hpp"
#include "scgen/synthdata.hpp"
#include "scgen/tensor_io.hpp"

using namespace scgen;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  const auto b = read_file_bytes(p.string());
  return {b.begin(), b.end()};
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;
  static fs::path data;
  static fs::path run;
  static fs::path config;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("scgen_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    data = root / "data";
    run = root / "run";
    config = root / "tiny.json";
    cli::make_data({data.string(), "families4", 6, 1, false});
    put(config, R"({"seed": 5, "train": {"steps": 4, "batch_size": 2, "checkpoint_every": 2}})");
    cli::TrainOptions t;
    t.config = config.string();
    t.data = data.string();
    t.out = run.string();
    t.quiet = true;
    cli::train(t);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static std::string final_ckpt() { return (run / cli::kFinalCheckpoint).string(); }
};

fs::path Cli::root, Cli::data, Cli::run, Cli::config;

}  // namespace

TEST_F(Cli, MakeDataWritesPairsAndSpec) {
  std::int64_t n = 0;
  for (const auto& e : fs::directory_iterator(data)) {
    (void)e;
    ++n;
  }
  EXPECT_EQ(n, 13);
  EXPECT_TRUE(fs::exists(data / "spec.json"));
  const auto again = root / "data_again";
  cli::make_data({again.string(), "families4", 6, 1, false});
  for (const auto& e : fs::directory_iterator(data)) EXPECT_EQ(slurp(e.path()), slurp(again / e.path().filename()));
}

TEST_F(Cli, MakeDataValidation) {
  try {
    cli::make_data({(root / "zero").string(), "families4", 0, 1, false});
    FAIL() << "count 0 accepted";
  } catch (const ParameterError& e) {
    EXPECT_EQ(std::string(e.what()), "count must be >= 1");
  }
  EXPECT_THROW(cli::make_data({data.string(), "families4", 6, 1, false}), IoError);
  EXPECT_THROW(cli::make_data({(root / "bad").string(), "families9", 2, 1, false}), ConfigError);
}

TEST_F(Cli, TrainOutputs) {
  for (const char* f : {"config.json", "metrics.csv", "ckpt_0000002.scgc", "ckpt_final.scgc", "samples_0000002.ppm",
                        "samples_final.ppm"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const auto log = lines_of(slurp(run / "metrics.csv"));
  ASSERT_EQ(log.size(), 5u);
  EXPECT_EQ(log[0], LossReport::csv_header());
  EXPECT_EQ(log[4].rfind("3,", 0), 0u);
  const auto resolved = parse_experiment_config(slurp(run / "config.json"));
  EXPECT_EQ(resolved.train.steps, 4);
  EXPECT_EQ(resolved.train.seed, 5u);
  EXPECT_DOUBLE_EQ(resolved.train.loss.perceptual, 10.0);
  EXPECT_DOUBLE_EQ(resolved.train.loss.regression, 2.0);
  EXPECT_EQ(load_checkpoint(final_ckpt()).step, 4);
}

TEST_F(Cli, ResumeContinuesAndMatches) {
  cli::TrainOptions t;
  t.config = config.string();
  t.data = data.string();
  t.out = (root / "resumed").string();
  t.quiet = true;
  t.stop_after = 1;
  const auto first = cli::train(t);
  EXPECT_EQ(first.last_step, 1);
  t.stop_after = 0;
  t.resume = first.final_checkpoint;
  const auto rest = cli::train(t);
  EXPECT_EQ(rest.first_step, 1);
  EXPECT_EQ(rest.reports.front().step, 1);
  EXPECT_EQ(rest.last_step, 4);
  EXPECT_EQ(slurp(rest.final_checkpoint), slurp(final_ckpt()));
  EXPECT_EQ(slurp(root / "resumed" / "metrics.csv"), slurp(run / "metrics.csv"));
}

TEST_F(Cli, TrainRejectsMismatchedData) {
  const auto small = root / "small16";
  auto spec = SceneSpec::families4(1);
  spec.resolution = 16;
  write_dataset(small.string(), spec, 4, false);
  cli::TrainOptions t;
  t.config = config.string();
  t.data = small.string();
  t.out = (root / "never").string();
  EXPECT_THROW(cli::train(t), ConfigError);
}

TEST_F(Cli, SynthDeterministicAndMultiModal) {
  const auto layout = (data / layout_filename(0)).string();
  const auto a = cli::synth({final_ckpt(), layout, 9, (root / "a.ppm").string(), 1});
  const auto b = cli::synth({final_ckpt(), layout, 9, (root / "b.ppm").string(), 1});
  EXPECT_EQ(slurp(a[0]), slurp(b[0]));
  const auto k = cli::synth({final_ckpt(), layout, 9, (root / "k.ppm").string(), 3});
  ASSERT_EQ(k.size(), 3u);
  EXPECT_EQ(fs::path(k[2]).filename(), "k_2.ppm");
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) EXPECT_NE(slurp(k[static_cast<std::size_t>(i)]), slurp(k[static_cast<std::size_t>(j)]));
  EXPECT_EQ(read_ppm(k[0]).shape(), (Shape{1, 3, 32, 32}));
}

TEST_F(Cli, SynthRejectsBadLayout) {
  LabelMap bad = read_pgm((data / layout_filename(1)).string());
  bad.labels[5 * 32 + 7] = 9;
  const auto path = (root / "bad.pgm").string();
  write_pgm(path, bad);
  try {
    cli::synth({final_ckpt(), path, 1, (root / "x.ppm").string(), 1});
    FAIL() << "class 9 accepted";
  } catch (const ValidityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(5, 7)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bad.pgm"), std::string::npos) << msg;
  }
}

TEST_F(Cli, AnalyzeEmitsSymmetricMatrix) {
  const auto out = root / "analysis";
  cli::analyze({final_ckpt(), data.string(), out.string()});
  const auto heat = read_pgm((out / "similarity.pgm").string());
  ASSERT_EQ(heat.h, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(heat.at(i, j), heat.at(j, i));
  EXPECT_EQ(slurp(out / "similarity.csv"), slurp(out / "level_3" / "similarity.csv"));
  EXPECT_TRUE(fs::exists(out / "level_1" / "similarity.pgm"));
  EXPECT_TRUE(fs::exists(out / "config.json"));
  cli::DirOptions coarse{final_ckpt(), data.string(), (root / "analysis1").string(), 1};
  cli::analyze(coarse);
  EXPECT_EQ(slurp(root / "analysis1" / "similarity.csv"), slurp(out / "level_1" / "similarity.csv"));
  coarse.level = 4;
  EXPECT_THROW(cli::analyze(coarse), ParameterError);
}

TEST_F(Cli, EvalHasSelfRow) {
  const auto out = root / "eval";
  cli::evaluate({final_ckpt(), data.string(), out.string()});
  const auto rows = lines_of(slurp(out / "metrics.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "step,frechet,accuracy,set");
  EXPECT_EQ(rows[1].rfind("4,", 0), 0u) << rows[1];
  EXPECT_LE(std::abs(std::stod(rows[1].substr(2))), 1e-6) << rows[1];
  EXPECT_NE(rows[1].find(",real"), std::string::npos);
  EXPECT_NE(rows[2].find(",generated"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "class_accuracy.csv"));
}

TEST_F(Cli, ThreadCountDoesNotChangeResults) {
  const int before = worker_threads();
  cli::TrainOptions t;
  t.config = config.string();
  t.data = data.string();
  t.quiet = true;
  set_worker_threads(3);
  t.out = (root / "threads3").string();
  const auto three = cli::train(t);
  set_worker_threads(before);
  EXPECT_EQ(slurp(three.final_checkpoint), slurp(final_ckpt()));
}

TEST(CliNames, CheckpointFiles) {
  EXPECT_EQ(cli::checkpoint_filename(250), "ckpt_0000250.scgc");
  EXPECT_STREQ(cli::kFinalCheckpoint, "ckpt_final.scgc");
}
