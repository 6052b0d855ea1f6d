#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "forcedecode/random.hpp"
#include "forcedecode/serialize.hpp"
#include "support/oracles.hpp"

using namespace forcedecode;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string err;
};

// Runs the CLI with stdout discarded and stderr captured.
Result run(const std::string& args) {
  const auto err = fs::temp_directory_path() / "forcedecode_cli_stderr.txt";
  const std::string cmd = std::string(FD_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, oracle::slurp(err)};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

fs::path small_config(const fs::path& dir) {
  const auto p = dir / "run.json";
  write_text(p, R"({"synth": {"n_subjects": 1, "trials_per_subject": 2, "duration_s": 6}})");
  return p;
}

FeatureTable table(Eigen::Index n, std::uint64_t seed, std::vector<std::string> names) {
  Rng rng(seed);
  FeatureTable t;
  t.values.resize(n, static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = rng.normal();
  t.target = t.values.col(0).array() + 2.0;
  t.window_times = Eigen::VectorXd::LinSpaced(n, 0.1, 0.1 + 0.05 * static_cast<double>(n - 1));
  t.feature_names = std::move(names);
  return t;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, SynthSameSeedSameTree) {
  const auto dir = oracle::scratch_dir("cli_synth");
  const auto cfg = small_config(dir);
  ASSERT_EQ(run("synth --config " + q(cfg) + " --seed 3 --out " + q(dir / "a")).code, 0);
  ASSERT_EQ(run("synth --config " + q(cfg) + " --seed 3 --out " + q(dir / "b")).code, 0);
  EXPECT_EQ(oracle::tree_digest(dir / "a"), oracle::tree_digest(dir / "b"));
  EXPECT_TRUE(fs::exists(dir / "a" / "subject_1" / "trial_2.json"));
}

TEST(Cli, NonEmptyOutputNeedsForce) {
  const auto dir = oracle::scratch_dir("cli_force");
  const auto cfg = small_config(dir);
  ASSERT_EQ(run("synth --config " + q(cfg) + " --out " + q(dir / "a")).code, 0);
  const auto r = run("synth --config " + q(cfg) + " --out " + q(dir / "a"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--force"), std::string::npos) << r.err;
  EXPECT_EQ(run("synth --config " + q(cfg) + " --out " + q(dir / "a") + " --force").code, 0);
}

TEST(Cli, StagesNoneCopiesTrialsByteForByte) {
  const auto dir = oracle::scratch_dir("cli_none");
  ASSERT_EQ(run("synth --config " + q(small_config(dir)) + " --out " + q(dir / "raw")).code, 0);
  ASSERT_EQ(run("preprocess --stages none --in " + q(dir / "raw") + " --out " + q(dir / "pre")).code, 0);
  EXPECT_EQ(oracle::tree_digest(dir / "raw" / "subject_1"), oracle::tree_digest(dir / "pre" / "subject_1"));
}

TEST(Cli, UnknownStageListsValidNames) {
  const auto dir = oracle::scratch_dir("cli_stage");
  ASSERT_EQ(run("synth --config " + q(small_config(dir)) + " --out " + q(dir / "raw")).code, 0);
  const auto r = run("preprocess --stages filter,bogus --in " + q(dir / "raw") + " --out " + q(dir / "pre"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("filter, notch, clean"), std::string::npos) << r.err;
}

TEST(Cli, FeaturesTrainEvaluateChain) {
  const auto dir = oracle::scratch_dir("cli_chain");
  ASSERT_EQ(run("synth --config " + q(small_config(dir)) + " --out " + q(dir / "raw")).code, 0);
  ASSERT_EQ(run("features --in " + q(dir / "raw") + " --out " + q(dir / "feat")).code, 0);
  const auto csv = dir / "feat" / "features.csv";
  ASSERT_EQ(run("train --model mlr --features " + q(csv) + " --out " + q(dir / "m.json")).code, 0);
  ASSERT_EQ(run("evaluate --model " + q(dir / "m.json") + " --features " + q(csv) + " --report " + q(dir / "r.json")).code, 0);
  const auto rep = nlohmann::json::parse(oracle::slurp(dir / "r.json"));
  EXPECT_EQ(rep["model"], "mlr");
  EXPECT_LE(rep["cod"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir / "r.predictions.csv"));
}

TEST(Cli, EvaluateRejectsForeignContract) {
  const auto dir = oracle::scratch_dir("cli_contract");
  write_feature_table(dir / "train.csv", table(200, 1, {"erp_pc1", "C3_mu_psd"}));
  write_feature_table(dir / "other.csv", table(50, 2, {"C3_mu_psd", "erp_pc1"}));
  ASSERT_EQ(run("train --model mlr --features " + q(dir / "train.csv") + " --out " + q(dir / "m.json")).code, 0);
  const auto r = run("evaluate --model " + q(dir / "m.json") + " --features " + q(dir / "other.csv") + " --report " +
                     q(dir / "r.json"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("feature contract mismatch"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "r.json"));
}

TEST(Cli, ExitCodes) {
  const auto dir = oracle::scratch_dir("cli_codes");
  // configuration
  write_text(dir / "bad.json", R"({"synth": {"sede": 3}})");
  EXPECT_EQ(run("synth --config " + q(dir / "bad.json") + " --out " + q(dir / "x")).code, 2);
  EXPECT_EQ(run("train --model svm --features f.csv --out m.json").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  // data
  EXPECT_EQ(run("evaluate --protocol ss --in " + q(dir / "missing") + " --report " + q(dir / "r.json")).code, 3);
  write_text(dir / "junk.csv", "a,b\n1,2\n");
  EXPECT_EQ(run("train --model mlr --features " + q(dir / "junk.csv") + " --out " + q(dir / "m.json")).code, 3);
  // numerical: exactly collinear columns without ridge
  auto t = table(100, 3, {"erp_pc1", "erp_pc2"});
  t.values.col(1) = 2.0 * t.values.col(0);
  write_feature_table(dir / "collinear.csv", t);
  write_text(dir / "noridge.json", R"({"protocol": {"linear_ridge": 0}})");
  const auto r = run("train --config " + q(dir / "noridge.json") + " --model mlr --features " + q(dir / "collinear.csv") +
                     " --out " + q(dir / "m.json"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("singular"), std::string::npos) << r.err;
}
