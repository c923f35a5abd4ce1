// Drives the cffuse executable end to end on a tiny corpus.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cffuse/metrics.hpp"
#include "cffuse/synth.hpp"
#include "cffuse/train.hpp"

using namespace cffuse;
namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / "cffuse_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + work().string() + "' && " + env + " '" CFFUSE_BIN "' " + args + " > last.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const std::string kTiny =
    " --set corpus.dir=corpus --set corpus.count=10 --set corpus.size=32 --set train.epochs=1 --set train.batch=4";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(run("gen-data" + kTiny), 0) << slurp(work() / "last.log");
    ASSERT_EQ(run("train" + kTiny + " -o trained"), 0) << slurp(work() / "last.log");
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("train --no-such-flag"), 1);
  EXPECT_EQ(run("train --set rsr.K"), 1);
  EXPECT_EQ(run("train --set no.such.key=1"), 1);
  {
    std::ofstream os(work() / "bad.cfg");
    os << "seed = 1\nnot a pair\n";
  }
  EXPECT_EQ(run("train -c bad.cfg"), 1);
  EXPECT_NE(slurp(work() / "last.log").find("line 2"), std::string::npos);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("train --set corpus.dir=nowhere -o x"), 2);
  EXPECT_EQ(run("eval" + kTiny + " --checkpoint missing.cfck"), 2);
  EXPECT_EQ(run("visualize" + kTiny + " --checkpoint trained/checkpoint.cfck --scene 99"), 2);
}

TEST_F(Cli, DivergenceExitsThree) {
  EXPECT_EQ(run("train" + kTiny + " --set train.lr=1e6 --set train.warmup_steps=0 --set train.clip_norm=0 "
                "--set train.epochs=3 -o diverged"),
            3);
}

TEST_F(Cli, TrainWritesArtifactsAndHonoursSeedEnv) {
  EXPECT_TRUE(fs::exists(work() / "trained" / "checkpoint.cfck"));
  const auto loss = slurp(work() / "trained" / "loss.csv");
  EXPECT_EQ(loss.rfind("step,l_i_spe,l_v_spe,l_det_cls,l_det_reg,l_det_obj,total\n", 0), 0u);
  EXPECT_NE(loss.find("\n2,"), std::string::npos);  // 8 training scenes, batch 4
  ASSERT_EQ(run("train" + kTiny + " --max-steps 1 -o seeded", "CF_FUSE_SEED=4242"), 0);
  EXPECT_NE(slurp(work() / "seeded" / "config.txt").find("seed = 4242\n"), std::string::npos);
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  ASSERT_EQ(run("train" + kTiny + " --max-steps 1 -o part"), 0);
  ASSERT_EQ(run("train" + kTiny + " --resume part/checkpoint.cfck -o part"), 0);
  EXPECT_EQ(slurp(work() / "part" / "checkpoint.cfck"), slurp(work() / "trained" / "checkpoint.cfck"));
  EXPECT_EQ(slurp(work() / "part" / "loss.csv"), slurp(work() / "trained" / "loss.csv"));
}

TEST_F(Cli, EvalWritesMetrics) {
  ASSERT_EQ(run("eval" + kTiny + " --checkpoint trained/checkpoint.cfck --split all --pr-curve -o ev"), 0);
  const auto m = slurp(work() / "ev" / "metrics.csv");
  for (const char* key : {"metric,value\n", "mAP50,", "mAP75,", "mAP,", "MR-2,", "AP50_class0,"}) {
    EXPECT_NE(m.find(key), std::string::npos) << key;
  }
  EXPECT_TRUE(fs::exists(work() / "ev" / "pr_curve.csv"));
  EXPECT_EQ(slurp(work() / "ev" / "detections.csv").rfind("image_id,class_id,score,x1,y1,x2,y2\n", 0), 0u);
}

TEST_F(Cli, FiltersWritesTriptych) {
  ASSERT_EQ(run("filters" + kTiny + " --checkpoint trained/checkpoint.cfck --modality ir -o fl"), 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(work() / "fl")) n += e.path().extension() == ".pgm";
  EXPECT_EQ(n, 3u);
  for (const char* f : {"ir_amplitude.pgm", "ir_filter.pgm", "ir_filtered.pgm"}) {
    EXPECT_TRUE(fs::exists(work() / "fl" / f)) << f;
  }
}

TEST_F(Cli, VisualizeSnrMatchesLibrary) {
  ASSERT_EQ(run("visualize" + kTiny + " --checkpoint trained/checkpoint.cfck --scene 3 -o vis"), 0);
  for (const char* f : {"rgb_before.ppm", "rgb_after.ppm", "ir_before.pgm", "ir_after.pgm", "rgb_amplitude.pgm",
                        "expert_ir_scale0.ppm"}) {
    EXPECT_TRUE(fs::exists(work() / "vis" / f)) << f;
  }
  const auto scenes = read_corpus((work() / "corpus").string());
  ModelConfig mc;
  mc.image_size = 32;
  RsdetModel model(mc);
  load_model_weights(model, (work() / "trained" / "checkpoint.cfck").string());
  const auto& s = scenes[3];
  const auto fwd = model.forward(s.image_v, s.image_i);
  std::ostringstream expect;
  expect.precision(17);
  expect << "modality,snr_before_db,snr_after_db\n"
         << "rgb," << snr(s.image_v, s.clean_v) << ',' << snr(fwd.cleaned_v, s.clean_v) << '\n'
         << "ir," << snr(s.image_i, s.clean_i) << ',' << snr(fwd.cleaned_i, s.clean_i) << '\n';
  EXPECT_EQ(slurp(work() / "vis" / "snr.csv"), expect.str());
}

TEST_F(Cli, AblateHasFourRowsAndIsReproducible) {
  const std::string args = "ablate" + kTiny + " --set ablate.seeds=1 --set ablate.threads=2";
  ASSERT_EQ(run(args + " -o abl_a"), 0);
  ASSERT_EQ(run(args + " -o abl_b"), 0);
  const auto table = slurp(work() / "abl_a" / "ablation.csv");
  std::istringstream is(table);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u) << table;
  EXPECT_EQ(lines[1].rfind("baseline,", 0), 0u);
  EXPECT_EQ(lines[4].rfind("both,", 0), 0u);
  EXPECT_EQ(table, slurp(work() / "abl_b" / "ablation.csv"));
  EXPECT_EQ(slurp(work() / "abl_a" / "ablation_cells.csv"), slurp(work() / "abl_b" / "ablation_cells.csv"));
}
