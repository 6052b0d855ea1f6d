#include <gtest/gtest.h>

#include "forcedecode/data_io.hpp"
#include "forcedecode/metrics.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/spectral.hpp"
#include "support/oracles.hpp"

using namespace forcedecode;
namespace fs = std::filesystem;

namespace {

Trial small_trial(std::uint64_t seed, std::size_t n = 100) {
  Rng rng(seed);
  Eigen::MatrixXd X(2, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = static_cast<double>(static_cast<float>(rng.normal() * 20.0));
  Eigen::VectorXd f(static_cast<Eigen::Index>(n));
  for (auto& v : f) v = static_cast<double>(static_cast<float>(rng.uniform(0.0, 6.0)));
  return Trial{"1", "2", 330.0, SignalMatrix(X, 500.0, {"C3", "C4"}), ForceTrace{f, 500.0}};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

SynthConfig quick_synth(std::vector<std::string> coupled, double rho, std::uint64_t seed) {
  SynthConfig c;
  c.n_subjects = 1;
  c.trials_per_subject = 3;
  c.coupled_channels = std::move(coupled);
  c.coupling = rho;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(TrialFile, BinaryRoundTripIsBitExact) {
  const auto dir = oracle::scratch_dir("binary_rt");
  const auto t = small_trial(1);
  const auto manifest = write_trial(dir, t, PayloadFormat::binary);
  const auto back = read_trial(manifest);
  EXPECT_EQ(back.subject_id, "1");
  EXPECT_EQ(back.trial_id, "2");
  EXPECT_EQ(back.weight_g, 330.0);
  EXPECT_EQ(back.signal.channel_labels(), t.signal.channel_labels());
  EXPECT_EQ(back.signal.fs(), 500.0);
  EXPECT_EQ(back.signal.data(), t.signal.data());
  EXPECT_EQ(back.force.values, t.force.values);
}

TEST(TrialFile, CsvRoundTripWithinTolerance) {
  const auto dir = oracle::scratch_dir("csv_rt");
  const auto t = small_trial(2);
  const auto back = read_trial(write_trial(dir, t, PayloadFormat::csv));
  EXPECT_LE((back.signal.data() - t.signal.data()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((back.force.values - t.force.values).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(TrialFile, TruncatedPayloadNamesCounts) {
  const auto dir = oracle::scratch_dir("trunc");
  const auto manifest = write_trial(dir, small_trial(3), PayloadFormat::binary);
  const auto payload = manifest.parent_path() / "trial_2.bin";
  fs::resize_file(payload, fs::file_size(payload) - 3 * 4 * 10);
  try {
    read_trial(manifest);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 100 samples"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 90 samples"), std::string::npos) << msg;
  }
}

TEST(TrialFile, UnknownVersionRejected) {
  const auto dir = oracle::scratch_dir("version");
  const auto manifest = write_trial(dir, small_trial(4));
  auto j = nlohmann::json::parse(oracle::slurp(manifest));
  j["version"] = 99;
  write_text(manifest, j.dump());
  try {
    read_trial(manifest);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version 99"), std::string::npos);
  }
}

TEST(TrialFile, LabelCountMismatch) {
  const auto dir = oracle::scratch_dir("labels");
  const auto manifest = write_trial(dir, small_trial(5), PayloadFormat::csv);
  auto j = nlohmann::json::parse(oracle::slurp(manifest));
  j["channel_labels"] = {"C3", "C4", "Cz"};
  write_text(manifest, j.dump());
  EXPECT_THROW(read_trial(manifest), DataError);
}

TEST(Dataset, LayoutAndOrder) {
  const auto dir = oracle::scratch_dir("layout");
  TrialSet set;
  for (int s = 1; s <= 2; ++s)
    for (int k = 1; k <= 2; ++k) {
      auto t = small_trial(static_cast<std::uint64_t>(10 * s + k));
      t.subject_id = std::to_string(s);
      t.trial_id = std::to_string(k);
      set.push_back(t);
    }
  write_dataset(dir, set);
  EXPECT_TRUE(fs::exists(dir / "subject_2" / "trial_1.json"));
  EXPECT_TRUE(fs::exists(dir / "subject_2" / "trial_1.bin"));
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(subject_ids(back), (std::vector<std::string>{"1", "2"}));
  EXPECT_THROW(read_dataset(dir / "missing"), DataError);
}

// ---- synthetic generator ---------------------------------------------------

TEST(Synthetic, DefaultShape) {
  SynthConfig c;
  c.duration_s = 8.0;
  const auto ds = generate_synthetic(c);
  ASSERT_EQ(ds.trials.size(), 12u);
  EXPECT_EQ(subject_ids(ds.trials).size(), 3u);
  for (const auto& t : ds.trials) {
    EXPECT_EQ(t.signal.n_samples(), 4000u);
    EXPECT_EQ(t.signal.channel_labels(), default_montage());
    EXPECT_TRUE(t.signal.data().allFinite());
  }
}

TEST(Synthetic, SameSeedBitIdenticalOnDisk) {
  SynthConfig c;
  c.duration_s = 6.0;
  c.n_subjects = 2;
  c.trials_per_subject = 2;
  const auto a = oracle::scratch_dir("synth_a");
  const auto b = oracle::scratch_dir("synth_b");
  write_synthetic(a, generate_synthetic(c));
  write_synthetic(b, generate_synthetic(c));
  EXPECT_EQ(oracle::tree_digest(a), oracle::tree_digest(b));
  c.seed = 2;
  const auto d = oracle::scratch_dir("synth_d");
  write_synthetic(d, generate_synthetic(c));
  EXPECT_NE(oracle::tree_digest(a), oracle::tree_digest(d));
}

TEST(Synthetic, PlateauLevels) {
  EXPECT_EQ(plateau_force_n(165.0), 1.6);
  EXPECT_EQ(plateau_force_n(330.0), 3.2);
  EXPECT_EQ(plateau_force_n(660.0), 6.5);
}

TEST(Synthetic, SidecarMuPowerTracksForceNegatively) {
  // pooled over the subject's trials, as the generator calibrates it
  const auto ds = generate_synthetic(quick_synth({"C3"}, 0.9, 3));
  std::vector<double> p, f;
  for (const auto& t : ds.truth) {
    ASSERT_EQ(t.ideal_mu_power.count("C3"), 1u);
    const auto& mu = t.ideal_mu_power.at("C3");
    ASSERT_EQ(mu.size(), t.window_force.size());
    p.insert(p.end(), mu.begin(), mu.end());
    f.insert(f.end(), t.window_force.begin(), t.window_force.end());
  }
  const double r = pearson(p, f);
  EXPECT_GE(r, -0.95);
  EXPECT_LE(r, -0.8);
}

// Default dataset size, pooled over every trial. Blinks sit at rest, so the
// frontal channels carry a small systematic negative correlation.
TEST(Synthetic, NullCouplingLeavesNoEnvelopeCorrelation) {
  for (std::uint64_t seed : {1, 2, 3}) {
    SynthConfig c;
    c.coupling = 0.0;
    c.seed = seed;
    const auto ds = generate_synthetic(c);
    for (const auto& label : c.montage) {
      std::vector<double> power, force;
      for (const auto& tr : ds.trials) {
        const auto sig = tr.signal.select({label});
        const auto wins = sliding_windows(sig.n_samples(), sig.fs(), {});
        const auto target = align_force(tr.force, wins, sig.n_samples());
        for (std::size_t k = 0; k < wins.size(); ++k) {
          std::vector<double> w(wins[k].size());
          for (std::size_t i = 0; i < w.size(); ++i) w[i] = sig.data()(0, static_cast<Eigen::Index>(wins[k].start + i));
          power.push_back(band_power(psd(w, sig.fs()), mu_band()));
          force.push_back(target(static_cast<Eigen::Index>(k)));
        }
      }
      EXPECT_LE(std::abs(pearson(power, force)), 0.1) << label << " seed " << seed;
    }
  }
}

TEST(Synthetic, ConfigValidation) {
  SynthConfig c;
  c.coupled_channels.clear();
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = SynthConfig{};
  c.coupling = 1.5;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
}

// ---- external adapter ------------------------------------------------------

namespace {

fs::path external_fixture(const std::string& name, const std::string& csv, const std::string& mapping) {
  const auto dir = oracle::scratch_dir(name);
  write_text(dir / "s1_t1.csv", csv);
  write_text(dir / "mapping.json", mapping);
  return dir / "mapping.json";
}

const char* kMapping = R"({"fs": 500, "channels": ["C3", "Cz"], "force_columns": ["f_index", "f_thumb"],
  "subjects": [{"subject_id": "1", "trials": [{"file": "s1_t1.csv", "trial_id": "1", "weight_g": 165}]}]})";

}  // namespace

TEST(ImportExternal, SumsFingerForces) {
  const auto m = external_fixture("ext_sum", "Cz,C3,f_index,f_thumb\n1,2,0.3,0.4\n3,4,0.1,0.2\n", kMapping);
  const auto set = import_external(m);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_NEAR(set[0].force.values(0), 0.7, 1e-12);
  EXPECT_EQ(set[0].signal.channel_labels(), (std::vector<std::string>{"C3", "Cz"}));
  EXPECT_EQ(set[0].signal.data()(0, 1), 4.0);
  EXPECT_EQ(set[0].weight_g, 165.0);
}

TEST(ImportExternal, MissingColumnListsAvailable) {
  const auto m = external_fixture("ext_missing", "C3,Cz,f_index\n1,2,0.3\n", kMapping);
  try {
    import_external(m);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("f_thumb"), std::string::npos);
    EXPECT_NE(msg.find("available columns: C3, Cz, f_index"), std::string::npos) << msg;
  }
}

TEST(ImportExternal, NineChannelLabelsKeepOrder) {
  const std::vector<std::string> nine{"C3", "CP1", "CP2", "Cz", "FC2", "FC6", "Fp1", "P3", "C4"};
  std::string header, row;
  for (auto it = nine.rbegin(); it != nine.rend(); ++it) {
    header += *it + ",";
    row += "1,";
  }
  nlohmann::json map = nlohmann::json::parse(kMapping);
  map["channels"] = nine;
  const auto m = external_fixture("ext_nine", header + "f_index,f_thumb\n" + row + "0,0\n" + row + "0,1\n", map.dump());
  EXPECT_EQ(import_external(m)[0].signal.channel_labels(), nine);
}

TEST(ImportExternal, SamplingRateMismatch) {
  nlohmann::json map = nlohmann::json::parse(kMapping);
  map["subjects"][0]["trials"].push_back({{"file", "s1_t1.csv"}, {"trial_id", "2"}, {"fs", 250}});
  const auto m = external_fixture("ext_fs", "C3,Cz,f_index,f_thumb\n1,2,0.3,0.4\n", map.dump());
  EXPECT_THROW(import_external(m), DataError);
}
