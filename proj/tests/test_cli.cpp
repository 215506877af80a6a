#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kSmall =
    " -s scene.train_count=16 -s scene.eval_count=12 -s grpo.epochs=1"
    " -s verifier.train_scenes=40 -s verifier.heldout_scenes=20 -s verifier.steps=100";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("groundloop-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(GROUNDLOOP_CLI) + " " + args + " > " + path("stdout.txt") + " 2> " +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static int lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsKeysAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  const std::string help = slurp(path("stdout.txt"));
  EXPECT_NE(help.find("grpo.group_size = 4  [published]"), std::string::npos);
  EXPECT_NE(help.find("eval.giou_mode = mean-iou"), std::string::npos);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train --no-such-flag"), 2);
  EXPECT_EQ(run("train -s grpo.nope=1 -o " + path("r")), 2);
  EXPECT_EQ(run("train -s grpo.group_size=1 -o " + path("r")), 2);
  EXPECT_EQ(run("train -c " + path("missing.cfg") + " -o " + path("r")), 3);
}

TEST_F(Cli, GenScenesCountsDeterminismAndForce) {
  ASSERT_EQ(run("gen-scenes --count 100 --out " + path("a.txt")), 0);
  EXPECT_EQ(lines(slurp(path("a.txt"))), 101);
  EXPECT_NE(slurp(path("stdout.txt")).find("samples = 100"), std::string::npos);
  ASSERT_EQ(run("gen-scenes --count 100 --out " + path("b.txt")), 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  EXPECT_EQ(run("gen-scenes --count 100 --out " + path("a.txt")), 2) << "refuses to overwrite";
  EXPECT_EQ(run("gen-scenes --count 100 -f --out " + path("a.txt")), 0);
  ASSERT_EQ(run("gen-scenes --count 30 --out " + path("d.txt") +
                " -s scene.query_mix.direct=1 -s scene.query_mix.relational=0 -s scene.query_mix.implicit=0"),
            0);
  const std::string out = slurp(path("stdout.txt"));
  EXPECT_NE(out.find("direct = 30"), std::string::npos) << out;
  EXPECT_EQ(run("gen-scenes --count 5 --out " + path("no/such/dir/x.txt")), 3);
}

TEST_F(Cli, TrainModesAuditAndDeterminism) {
  ASSERT_EQ(run("gen-scenes --count 16 --out " + path("train.txt")), 0);
  ASSERT_EQ(run("train --mode extrinsic-iou --data " + path("train.txt") + kSmall + " -o " + path("ext")), 0)
      << slurp(path("stderr.txt"));
  for (const char* f : {"resolved.cfg", "steps.csv", "eval.csv", "summary.txt", "snapshot.snap"})
    EXPECT_TRUE(fs::exists(path(std::string("ext/") + f))) << f;
  EXPECT_EQ(slurp(path("ext/summary.txt")).find("gt_reads_in_training = 0"), std::string::npos);

  ASSERT_EQ(run("train --mode intrinsic-oracle" + kSmall + " -o " + path("t1")), 0);
  EXPECT_NE(slurp(path("t1/summary.txt")).find("gt_reads_in_training = 0\n"), std::string::npos);
  ASSERT_EQ(run("train --mode intrinsic-oracle" + kSmall + " -o " + path("t2")), 0);
  EXPECT_EQ(slurp(path("t1/steps.csv")), slurp(path("t2/steps.csv")));
  ASSERT_EQ(run("train --mode intrinsic-oracle" + kSmall + " -s run.workers=3 -o " + path("t3")), 0);
  EXPECT_EQ(slurp(path("t1/steps.csv")), slurp(path("t3/steps.csv")));
  EXPECT_EQ(slurp(path("t1/snapshot.snap")), slurp(path("t3/snapshot.snap")));

  EXPECT_EQ(run("train --mode intrinsic-oracle" + kSmall + " -o " + path("t1")), 2) << "non-empty run dir";
  EXPECT_EQ(run("train --mode intrinsic-oracle -f" + kSmall + " -o " + path("t1")), 0);
  EXPECT_EQ(run("train --mode sideways -o " + path("t4")), 2);
  EXPECT_EQ(run("train --data " + path("absent.txt") + " -o " + path("t5")), 3);
}

TEST_F(Cli, EvolveResumeEvalAndDiagnose) {
  ASSERT_EQ(run("evolve -k 2" + kSmall + " -o " + path("evo")), 0) << slurp(path("stderr.txt"));
  for (int k = 0; k <= 2; ++k) EXPECT_TRUE(fs::is_directory(path("evo/round-" + std::to_string(k))));
  EXPECT_FALSE(fs::exists(path("evo/round-3")));
  const std::string rounds = slurp(path("evo/rounds.csv"));
  EXPECT_EQ(lines(rounds), 4);
  EXPECT_EQ(rounds.find("\n0,"), rounds.find('\n'));
  const std::string report = slurp(path("evo/report.txt"));
  const std::string snap1 = slurp(path("evo/round-1/snapshot.snap"));

  fs::remove_all(path("evo/round-2"));
  ASSERT_EQ(run("evolve -k 2 --resume" + kSmall + " -o " + path("evo")), 0) << slurp(path("stderr.txt"));
  EXPECT_EQ(slurp(path("evo/round-1/snapshot.snap")), snap1);
  EXPECT_EQ(slurp(path("evo/report.txt")), report);

  const std::string s0 = path("evo/round-0/snapshot.snap");
  const std::string direct =
      kSmall + " -s scene.query_mix.direct=1 -s scene.query_mix.relational=0 -s scene.query_mix.implicit=0";
  ASSERT_EQ(run("eval --snapshot " + s0 + direct + " -o " + path("e1")), 0);
  ASSERT_EQ(run("eval --snapshot " + s0 + direct + " -o " + path("e2")), 0);
  EXPECT_EQ(slurp(path("e1/eval.csv")), slurp(path("e2/eval.csv")));
  const std::string summary = slurp(path("e1/eval.txt"));
  const auto at = summary.find("acc_at_05 = ");
  ASSERT_NE(at, std::string::npos) << summary;
  EXPECT_LE(std::stod(summary.substr(at + 12)), 0.1);

  ASSERT_EQ(run("diagnose --snapshot " + s0 + kSmall + " -o " + path("d")), 0);
  EXPECT_NE(slurp(path("d/diagnose.txt")).find("ver_entropy_bound_holds = true"), std::string::npos);

  std::string bad = slurp(s0);
  bad[bad.size() / 2] ^= 0x01;
  std::ofstream(path("bad.snap"), std::ios::binary) << bad;
  EXPECT_EQ(run("eval --snapshot " + path("bad.snap") + kSmall + " -o " + path("e3")), 4);
  std::string old = slurp(s0);
  old.replace(0, 7, "snap-v0");
  std::ofstream(path("old.snap"), std::ios::binary) << old;
  EXPECT_EQ(run("eval --snapshot " + path("old.snap") + kSmall + " -o " + path("e4")), 4);
  EXPECT_EQ(run("eval --snapshot " + path("none.snap") + kSmall + " -o " + path("e5")), 3);
}

TEST_F(Cli, AblateTableAndSeedCount) {
  ASSERT_EQ(run("ablate --axis area-penalty --seeds 1" + kSmall + " -o " + path("ab")), 0)
      << slurp(path("stderr.txt"));
  EXPECT_EQ(lines(slurp(path("ab/ablation.csv"))), 3) << "header + one row per variant";
  EXPECT_TRUE(fs::exists(path("ab/ablation.txt")));
  EXPECT_EQ(run("ablate --axis area-penalty --seeds 0" + kSmall + " -o " + path("ab0")), 2);
  EXPECT_EQ(run("ablate --axis colour --seeds 1" + kSmall + " -o " + path("ab1")), 2);
}
