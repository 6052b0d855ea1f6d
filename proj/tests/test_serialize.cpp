#include <gtest/gtest.h>

#include "forcedecode/random.hpp"
#include "forcedecode/serialize.hpp"
#include "support/oracles.hpp"

using namespace forcedecode;

namespace {

FeatureTable random_table(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  FeatureTable t;
  t.values.resize(n, 3);
  for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = rng.normal() * 40.0;
  t.target = (0.02 * t.values.col(0) - 0.01 * t.values.col(2)).array() + 2.0;
  for (auto& v : t.target) v += 0.05 * rng.normal();
  t.window_times = Eigen::VectorXd::LinSpaced(n, 1.05, 1.05 + 0.05 * static_cast<double>(n - 1));
  t.feature_names = {"erp_pc1", "C3_mu_psd", "C3_mu_erds"};
  return t;
}

}  // namespace

TEST(ModelJson, RoundTripPredictsIdentically) {
  const auto t = random_table(300, 1);
  FitConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 5;
  for (ModelKind k : all_model_kinds()) {
    const auto m = fit_regressor(k, t, cfg);
    const auto text = to_json(m).dump();
    const auto back = model_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back.kind, k);
    EXPECT_EQ(back.feature_contract(), m.feature_contract());
    const auto in = contract_columns(t, m.feature_contract());
    EXPECT_EQ(predict(back, in), predict(m, in)) << to_string(k);
    EXPECT_EQ(to_json(back).dump(), text) << to_string(k);
  }
}

TEST(ModelJson, RejectsWrongVersionAndShapes) {
  const auto m = fit_regressor(ModelKind::mlr, random_table(100, 2), {});
  auto j = nlohmann::json::parse(to_json(m).dump());
  j["version"] = 7;
  EXPECT_THROW(model_from_json(j), DataError);
  j = nlohmann::json::parse(to_json(m).dump());
  j["feature_contract"].push_back("extra");
  EXPECT_THROW(model_from_json(j), DataError);
  j = nlohmann::json::parse(to_json(m).dump());
  j.erase("params");
  EXPECT_THROW(model_from_json(j), DataError);
  EXPECT_THROW(model_from_json(nlohmann::json{{"format", "other"}}), DataError);
}

TEST(FeatureCsv, RoundTripWithinTolerance) {
  const auto dir = oracle::scratch_dir("feature_csv");
  const auto t = random_table(50, 3);
  write_feature_table(dir / "f.csv", t);
  const auto back = read_feature_table(dir / "f.csv");
  EXPECT_EQ(back.feature_names, t.feature_names);
  EXPECT_LE((back.values - t.values).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((back.target - t.target).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((back.window_times - t.window_times).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FeatureCsv, RejectsForeignHeader) {
  const auto dir = oracle::scratch_dir("feature_csv_bad");
  {
    std::ofstream out(dir / "f.csv");
    out << "a,b,c\n1,2,3\n";
  }
  EXPECT_THROW(read_feature_table(dir / "f.csv"), DataError);
}

TEST(RunConfigJson, RoundTripAndHash) {
  RunConfig c;
  c.synth.seed = 9;
  c.protocol.plan.unit = SplitUnit::block;
  c.protocol.fit.epochs = 17;
  c.protocol.pipeline.stages = StageFlags::parse("filter,notch");
  const auto j = to_json(c);
  const auto back = run_config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.synth.seed = 10;
  EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(RunConfigJson, UnknownKeyAndBadValues) {
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"synth", {{"sede", 3}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"model", "svm"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"protocol", {{"fit", {{"epochs", 0}}}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"synth", {{"coupling", "high"}}}}), ConfigError);
}

TEST(Hash, FnvKnownValues) {
  // 64-bit FNV-1a reference values
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
