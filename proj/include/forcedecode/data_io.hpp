#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "forcedecode/error.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/signal.hpp"
#include "forcedecode/spectral.hpp"

namespace forcedecode {

namespace fs = std::filesystem;

inline constexpr int kTrialFormatVersion = 1;

enum class PayloadFormat { binary, csv };

inline std::string to_string(PayloadFormat p) { return p == PayloadFormat::binary ? "bin" : "csv"; }

inline PayloadFormat payload_format_from_string(const std::string& s) {
  if (s == "bin" || s == "binary") return PayloadFormat::binary;
  if (s == "csv") return PayloadFormat::csv;
  throw ConfigError("unknown payload format '" + s + "' (valid: bin, csv)");
}

// The 32-channel 10-20 montage used by the synthetic generator.
inline std::vector<std::string> default_montage() {
  return {"Fp1", "Fp2", "F7",  "F3",  "Fz", "F4",  "F8",  "FC5", "FC1", "FC2", "FC6",
          "T7",  "C3",  "Cz",  "C4",  "T8", "TP9", "CP5", "CP1", "CP2", "CP6", "TP10",
          "P7",  "P3",  "Pz",  "P4",  "P8", "PO9", "O1",  "Oz",  "O2",  "PO10"};
}

namespace detail {

// Write-to-temp then rename so readers never see a partial file.
inline void atomic_write(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t\"");
    const auto e = s.find_last_not_of(" \t\"");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::ptrdiff_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  }
};

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  t.header = split_csv_line(line);
  t.columns.assign(t.header.size(), {});
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw DataError("'" + path.string() + "' row " + std::to_string(row) + ": expected " +
                      std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      try {
        std::size_t used = 0;
        t.columns[j].push_back(std::stod(cells[j], &used));
      } catch (const std::exception&) {
        throw DataError("'" + path.string() + "' row " + std::to_string(row) + ": not a number: '" + cells[j] + "'");
      }
    }
  }
  return t;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trial files
// ---------------------------------------------------------------------------

inline fs::path trial_manifest_path(const fs::path& root, const std::string& subject_id, const std::string& trial_id) {
  return root / ("subject_" + subject_id) / ("trial_" + trial_id + ".json");
}

// Writes the manifest and payload next to each other; returns the manifest path.
inline fs::path write_trial(const fs::path& root, const Trial& trial, PayloadFormat fmt = PayloadFormat::binary) {
  const auto& sig = trial.signal;
  if (trial.force.size() != sig.n_samples()) throw DataError("write_trial: force and signal lengths differ");
  const fs::path manifest = trial_manifest_path(root, trial.subject_id, trial.trial_id);
  const std::string payload_name = "trial_" + trial.trial_id + "." + to_string(fmt);
  const auto C = sig.n_channels();
  const auto n = sig.n_samples();
  std::string bytes;
  if (fmt == PayloadFormat::binary) {
    bytes.resize((C + 1) * n * 4);
    std::size_t at = 0;
    auto put = [&](double v) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = detail::to_little(u);
      std::memcpy(bytes.data() + at, &u, 4);
      at += 4;
    };
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < n; ++j) put(sig.data()(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)));
    for (std::size_t j = 0; j < n; ++j) put(trial.force.values(static_cast<Eigen::Index>(j)));
  } else {
    std::ostringstream ss;
    for (const auto& l : sig.channel_labels()) ss << l << ',';
    ss << "force_n\n";
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < C; ++c) ss << detail::format_double(sig.data()(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j))) << ',';
      ss << detail::format_double(trial.force.values(static_cast<Eigen::Index>(j))) << '\n';
    }
    bytes = ss.str();
  }
  nlohmann::ordered_json m;
  m["format"] = "forcedecode-trial";
  m["version"] = kTrialFormatVersion;
  m["subject_id"] = trial.subject_id;
  m["trial_id"] = trial.trial_id;
  m["weight_g"] = trial.weight_g;
  m["fs"] = sig.fs();
  m["t0"] = sig.t0();
  m["channel_labels"] = sig.channel_labels();
  m["n_samples"] = n;
  m["payload"] = to_string(fmt);
  m["payload_file"] = payload_name;
  detail::atomic_write(manifest.parent_path() / payload_name, bytes);
  detail::atomic_write(manifest, m.dump(2) + "\n");
  return manifest;
}

inline Trial read_trial(const fs::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + manifest_path.string() + "': invalid manifest: " + e.what());
  }
  try {
    if (m.value("format", std::string()) != "forcedecode-trial") throw DataError("'" + manifest_path.string() + "': not a trial manifest");
    const int version = m.at("version").get<int>();
    if (version != kTrialFormatVersion) {
      throw DataError("'" + manifest_path.string() + "': unsupported format version " + std::to_string(version) +
                      " (expected " + std::to_string(kTrialFormatVersion) + ")");
    }
    const auto labels = m.at("channel_labels").get<std::vector<std::string>>();
    const auto n = m.at("n_samples").get<std::size_t>();
    const double fsr = m.at("fs").get<double>();
    const auto fmt = payload_format_from_string(m.at("payload").get<std::string>());
    const fs::path payload = manifest_path.parent_path() / m.at("payload_file").get<std::string>();
    const auto C = labels.size();
    Eigen::MatrixXd data(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(n));
    Eigen::VectorXd force(static_cast<Eigen::Index>(n));
    if (fmt == PayloadFormat::binary) {
      const std::string bytes = detail::read_file(payload);
      const std::size_t expected = (C + 1) * n * 4;
      if (bytes.size() != expected) {
        const std::size_t found = bytes.size() / 4 / (C + 1);
        throw DataError("'" + payload.string() + "': truncated or oversized payload, expected " + std::to_string(n) +
                        " samples x " + std::to_string(C + 1) + " columns (" + std::to_string(expected) + " bytes), found " +
                        std::to_string(found) + " samples (" + std::to_string(bytes.size()) + " bytes)");
      }
      std::size_t at = 0;
      auto get = [&]() {
        std::uint32_t u;
        std::memcpy(&u, bytes.data() + at, 4);
        at += 4;
        u = detail::to_little(u);
        float f;
        std::memcpy(&f, &u, 4);
        return static_cast<double>(f);
      };
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < n; ++j) data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = get();
      for (std::size_t j = 0; j < n; ++j) force(static_cast<Eigen::Index>(j)) = get();
    } else {
      const auto t = detail::read_csv(payload);
      if (t.header.size() != C + 1) {
        throw DataError("'" + payload.string() + "': " + std::to_string(t.header.size()) + " columns but " +
                        std::to_string(C) + " labels + force declared");
      }
      for (std::size_t c = 0; c < C; ++c) {
        if (t.header[c] != labels[c]) throw DataError("'" + payload.string() + "': column " + std::to_string(c) + " is '" + t.header[c] + "', manifest says '" + labels[c] + "'");
      }
      if (t.columns.front().size() != n) {
        throw DataError("'" + payload.string() + "': expected " + std::to_string(n) + " samples, found " +
                        std::to_string(t.columns.front().size()));
      }
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < n; ++j) data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = t.columns[c][j];
      for (std::size_t j = 0; j < n; ++j) force(static_cast<Eigen::Index>(j)) = t.columns[C][j];
    }
    return Trial{m.at("subject_id").get<std::string>(), m.at("trial_id").get<std::string>(), m.value("weight_g", 0.0),
                 SignalMatrix(std::move(data), fsr, labels, m.value("t0", 0.0)), ForceTrace{std::move(force), fsr}};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + manifest_path.string() + "': malformed manifest: " + e.what());
  }
}

inline void write_dataset(const fs::path& root, const TrialSet& trials, PayloadFormat fmt = PayloadFormat::binary) {
  for (const auto& t : trials) write_trial(root, t, fmt);
}

// Every subject_*/trial_*.json under root, ordered by path.
inline TrialSet read_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory '" + root.string() + "' does not exist");
  std::vector<fs::path> manifests;
  for (const auto& sub : fs::directory_iterator(root)) {
    if (!sub.is_directory() || sub.path().filename().string().rfind("subject_", 0) != 0) continue;
    for (const auto& f : fs::directory_iterator(sub.path())) {
      const auto name = f.path().filename().string();
      if (name.rfind("trial_", 0) == 0 && f.path().extension() == ".json" && name.find(".truth.") == std::string::npos) {
        manifests.push_back(f.path());
      }
    }
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw DataError("no trial manifests under '" + root.string() + "'");
  TrialSet out;
  for (const auto& p : manifests) out.push_back(read_trial(p));
  return out;
}

inline std::vector<std::string> subject_ids(const TrialSet& trials) {
  std::vector<std::string> ids;
  for (const auto& t : trials)
    if (std::find(ids.begin(), ids.end(), t.subject_id) == ids.end()) ids.push_back(t.subject_id);
  return ids;
}

// ---------------------------------------------------------------------------
// Synthetic forward model
// ---------------------------------------------------------------------------

struct SynthConfig {
  int n_subjects = 3;
  int trials_per_subject = 4;
  double fs = 500.0;
  double duration_s = 30.0;
  std::vector<std::string> coupled_channels{"C3", "Cz", "CP1", "CP2", "P3"};
  double coupling = 0.9;  // target |corr(ideal Mu power, force)|
  double noise_floor = 1.0;  // white-noise sd, uV
  std::uint64_t seed = 1;
  double mains_hz = 50.0;
  std::vector<std::string> montage = default_montage();
  std::vector<double> weights_g{165.0, 330.0, 660.0};
  double mu_amplitude = 60.0;     // force-coupled Mu generator, uV
  double mu_leak = 0.1;           // its gain on channels outside coupled_channels
  double alpha_amplitude = 20.0;  // uncoupled rhythm, mostly off the coupled channels
  double theta_amplitude = 3.0;
  double background_sd = 4.0;
  double mains_amplitude = 15.0;
  double blink_amplitude = 80.0;
  // Mu power = P0 * (1 - erd_depth * drive), drive = s(force) + noise, where
  // s rises from 0 at rest to 1 at the heaviest plateau and saturates with
  // scale erd_saturation_n (<= 0: linear in force).
  double erd_depth = 0.8;
  double erd_saturation_n = 2.0;
  WindowSpec window{};

  void validate() const {
    if (n_subjects < 1 || trials_per_subject < 1) throw ConfigError("SynthConfig: need at least one subject and trial");
    if (!(fs > 0.0) || !(duration_s >= 4.0)) throw ConfigError("SynthConfig: fs > 0 and duration_s >= 4 required");
    if (coupled_channels.empty()) throw ConfigError("SynthConfig: coupled_channels must not be empty");
    for (const auto& c : coupled_channels)
      if (std::find(montage.begin(), montage.end(), c) == montage.end()) throw ConfigError("SynthConfig: coupled channel '" + c + "' not in montage");
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw ConfigError("SynthConfig: coupling must be in [0, 1]");
    if (!(noise_floor >= 0.0)) throw ConfigError("SynthConfig: noise_floor must be non-negative");
    if (!(mu_amplitude > 0.0) || !(mu_leak >= 0.0) || !(alpha_amplitude >= 0.0) || !(theta_amplitude >= 0.0) || !(background_sd >= 0.0))
      throw ConfigError("SynthConfig: amplitudes must be non-negative (mu_amplitude positive)");
    if (!(mains_hz > 0.0 && mains_hz < fs / 2.0)) throw ConfigError("SynthConfig: mains_hz outside (0, fs/2)");
    if (weights_g.empty()) throw ConfigError("SynthConfig: weights_g must not be empty");
    window.validate();
  }
};

// Ground truth written next to each synthetic trial.
struct TrialTruth {
  std::string subject_id;
  std::string trial_id;
  std::vector<std::string> coupled_channels;
  double coupling = 0.0;
  double drive_noise_sd = 0.0;
  double erd_depth = 0.0;
  double erd_saturation_n = 0.0;
  WindowSpec window;
  std::vector<double> window_force;
  std::map<std::string, std::vector<double>> ideal_mu_power;  // per coupled channel, per window
};

struct SyntheticDataset {
  TrialSet trials;
  std::vector<TrialTruth> truth;
};

// Plateau grip force for a lifted mass: weight plus grip margin.
inline double plateau_force_n(double weight_g) {
  if (weight_g == 165.0) return 1.6;
  if (weight_g == 330.0) return 3.2;
  if (weight_g == 660.0) return 6.5;
  return weight_g * 0.00985;
}

namespace detail {

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Unit-variance low-pass noise with time constant tau.
inline std::vector<double> slow_noise(Rng& rng, std::size_t n, double fs, double tau_s) {
  std::vector<double> x(n);
  const double a = std::exp(-1.0 / (tau_s * fs));
  double s = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    s = a * s + std::sqrt(1.0 - a * a) * rng.normal();
    x[i] = s;
  }
  double m = 0.0, v = 0.0;
  for (double e : x) m += e;
  m /= static_cast<double>(n);
  for (double e : x) v += (e - m) * (e - m);
  const double sd = std::sqrt(v / static_cast<double>(n));
  for (double& e : x) e = (e - m) / (sd > 0.0 ? sd : 1.0);
  return x;
}

// 1/f noise (Kellet's pinking filter), scaled to the requested sd.
inline std::vector<double> pink_noise(Rng& rng, std::size_t n, double sd) {
  std::vector<double> x(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (std::size_t i = 0; i < n + 500; ++i) {
    const double w = rng.normal();
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    const double p = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    if (i >= 500) x[i - 500] = p;
  }
  double m = 0.0, v = 0.0;
  for (double e : x) m += e;
  m /= static_cast<double>(n);
  for (double e : x) v += (e - m) * (e - m);
  const double s = std::sqrt(v / static_cast<double>(n));
  for (double& e : x) e = (e - m) / (s > 0.0 ? s : 1.0) * sd;
  return x;
}

inline double blink_gain(const std::string& label) {
  static const std::map<std::string, double> gains{{"Fp1", 1.0}, {"Fp2", 0.9}, {"F7", 0.45}, {"F8", 0.4},
                                                   {"F3", 0.25}, {"Fz", 0.3},  {"F4", 0.25}};
  const auto it = gains.find(label);
  return it == gains.end() ? 0.02 : it->second;
}

inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

struct ForceProfile {
  std::vector<double> clean;  // noiseless force, N
  std::vector<double> measured;
  double onset_s = 0.0;
  double release_s = 0.0;
};

inline ForceProfile force_profile(Rng& rng, std::size_t n, double fs, double duration, double level) {
  ForceProfile p;
  p.clean.resize(n);
  p.measured.resize(n);
  p.onset_s = duration * 0.28 + rng.uniform(-0.3, 0.3);
  p.release_s = duration * 0.72 + rng.uniform(-0.3, 0.3);
  const double ramp = 0.8;
  const auto tremor = slow_noise(rng, n, fs, 0.15);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double up = smoothstep((t - p.onset_s) / ramp);
    const double down = 1.0 - smoothstep((t - p.release_s) / ramp);
    const double env = std::min(up, down);
    p.clean[i] = level * env * (1.0 + 0.02 * tremor[i]);
    p.measured[i] = p.clean[i] + 0.01 * rng.normal();
  }
  return p;
}

}  // namespace detail

// Grasp-and-lift trials whose Mu power on the coupled channels falls with
// grip force (event-related desynchronisation), on top of 1/f background,
// Theta activity, mains interference, frontal blinks during rest and white
// noise. Deterministic for a given config.
inline SyntheticDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  const auto C = cfg.montage.size();
  const double max_level = [&] {
    double m = 0.0;
    for (double w : cfg.weights_g) m = std::max(m, plateau_force_n(w));
    return m;
  }();
  const auto windows = sliding_windows(n, cfg.fs, cfg.window);
  SyntheticDataset out;

  for (int s = 0; s < cfg.n_subjects; ++s) {
    const std::string sid = std::to_string(s + 1);
    Rng subj_rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(s)));
    // Subject-level spatial parameters.
    // Scalp projections of the three cortical generators.
    std::vector<double> mu_gain(C), alpha_gain(C), theta_gain(C), mains_gain(C);
    for (std::size_t c = 0; c < C; ++c) {
      const bool coupled = std::find(cfg.coupled_channels.begin(), cfg.coupled_channels.end(), cfg.montage[c]) != cfg.coupled_channels.end();
      mu_gain[c] = coupled ? subj_rng.uniform(0.8, 1.2) : cfg.mu_leak * subj_rng.uniform(0.5, 1.5);
      alpha_gain[c] = coupled ? 0.2 * subj_rng.uniform(0.5, 1.0) : subj_rng.uniform(0.5, 1.0);
      theta_gain[c] = subj_rng.uniform(0.5, 1.0);
      mains_gain[c] = subj_rng.uniform(0.3, 1.0);
    }
    const double mu_freq = subj_rng.uniform(9.5, 10.5);
    const double alpha_freq = subj_rng.uniform(8.5, 11.5);
    const double theta_freq = subj_rng.uniform(5.0, 7.0);
    const double mains_phase = subj_rng.uniform(0.0, 2.0 * std::numbers::pi);

    // Force profiles first: the drive-noise level depends on their spread.
    std::vector<detail::ForceProfile> profiles;
    std::vector<double> weights;
    std::vector<Rng> trial_rngs;
    for (int k = 0; k < cfg.trials_per_subject; ++k) {
      trial_rngs.emplace_back(Rng::derive(Rng::derive(cfg.seed, static_cast<std::uint64_t>(s)), static_cast<std::uint64_t>(k + 1)));
      const double w = cfg.weights_g[static_cast<std::size_t>(k) % cfg.weights_g.size()];
      weights.push_back(w);
      profiles.push_back(detail::force_profile(trial_rngs.back(), n, cfg.fs, cfg.duration_s, plateau_force_n(w)));
    }
    // Drive noise so that corr(drive, force) over the subject's samples is
    // the target coupling: sigma^2 = (cov(s, F) / (rho sd_F))^2 - var(s).
    auto shape = [&](double f) {
      if (cfg.erd_saturation_n <= 0.0) return f / max_level;
      return (1.0 - std::exp(-std::max(f, 0.0) / cfg.erd_saturation_n)) / (1.0 - std::exp(-max_level / cfg.erd_saturation_n));
    };
    double mf = 0.0, ms = 0.0, vf = 0.0, vs = 0.0, cfs = 0.0;
    const double N = static_cast<double>(n * profiles.size());
    for (const auto& p : profiles)
      for (double v : p.clean) {
        mf += v;
        ms += shape(v);
      }
    mf /= N;
    ms /= N;
    for (const auto& p : profiles)
      for (double v : p.clean) {
        const double a = v - mf, b = shape(v) - ms;
        vf += a * a;
        vs += b * b;
        cfs += a * b;
      }
    vf /= N;
    vs /= N;
    cfs /= N;
    const double rho = cfg.coupling;
    double noise_sd = std::sqrt(vs);
    if (rho > 0.0) {
      const double r = cfs / (rho * std::sqrt(vf));
      noise_sd = std::sqrt(std::max(0.0, r * r - vs));
    }

    for (int k = 0; k < cfg.trials_per_subject; ++k) {
      Rng& rng = trial_rngs[static_cast<std::size_t>(k)];
      const auto& prof = profiles[static_cast<std::size_t>(k)];
      const std::string tid = std::to_string(k + 1);
      Eigen::MatrixXd X(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(n));

      // Blinks at random rest times.
      std::vector<double> blink(n, 0.0);
      const int n_blinks = 1 + static_cast<int>(rng.index(3));
      for (int b = 0; b < n_blinks; ++b) {
        const bool early = rng.uniform() < 0.5;
        const double lo = early ? 0.3 : prof.release_s + 1.5;
        const double hi = early ? prof.onset_s - 0.8 : cfg.duration_s - 0.6;
        if (hi <= lo) continue;
        const double tb = rng.uniform(lo, hi);
        for (std::size_t i = 0; i < n; ++i) {
          const double u = (static_cast<double>(i) / cfg.fs - tb) / 0.4;
          if (u >= 0.0 && u <= 1.0) blink[i] += cfg.blink_amplitude * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u));
        }
      }

      TrialTruth truth;
      truth.subject_id = sid;
      truth.trial_id = tid;
      truth.coupled_channels = cfg.coupled_channels;
      truth.coupling = rho;
      truth.drive_noise_sd = noise_sd;
      truth.erd_depth = cfg.erd_depth;
      truth.erd_saturation_n = cfg.erd_saturation_n;
      truth.window = cfg.window;

      // Source time courses.
      std::vector<double> mu_src(n), mu_power(n), alpha_src(n), theta_src(n);
      {
        const auto xi = detail::slow_noise(rng, n, cfg.fs, 0.25);
        const auto fm = detail::slow_noise(rng, n, cfg.fs, 0.5);
        const auto alpha_env = detail::slow_noise(rng, n, cfg.fs, 0.7);
        const auto theta_env = detail::slow_noise(rng, n, cfg.fs, 0.5);
        double ph_mu = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double ph_alpha = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double ph_theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double p0 = 0.5 * cfg.mu_amplitude * cfg.mu_amplitude;
        for (std::size_t i = 0; i < n; ++i) {
          const double drive = (rho > 0.0 ? shape(prof.clean[i]) : 0.0) + noise_sd * xi[i];
          mu_power[i] = p0 * std::max(0.02, 1.0 - cfg.erd_depth * drive);
          ph_mu += 2.0 * std::numbers::pi * (mu_freq + 0.3 * fm[i]) / cfg.fs;
          ph_alpha += 2.0 * std::numbers::pi * alpha_freq / cfg.fs;
          ph_theta += 2.0 * std::numbers::pi * theta_freq / cfg.fs;
          mu_src[i] = std::sqrt(2.0 * mu_power[i]) * std::sin(ph_mu);
          alpha_src[i] = cfg.alpha_amplitude * std::max(0.1, 1.0 + 0.4 * alpha_env[i]) * std::sin(ph_alpha);
          theta_src[i] = cfg.theta_amplitude * (1.0 + 0.3 * theta_env[i]) * std::sin(ph_theta);
        }
      }

      for (std::size_t c = 0; c < C; ++c) {
        const auto& label = cfg.montage[c];
        const bool coupled = std::find(cfg.coupled_channels.begin(), cfg.coupled_channels.end(), label) != cfg.coupled_channels.end();
        const auto bg = detail::pink_noise(rng, n, cfg.background_sd);
        for (std::size_t i = 0; i < n; ++i) {
          const double t = static_cast<double>(i) / cfg.fs;
          const double v = bg[i] + mu_gain[c] * mu_src[i] + alpha_gain[c] * alpha_src[i] + theta_gain[c] * theta_src[i] +
                           cfg.noise_floor * rng.normal() +
                           cfg.mains_amplitude * mains_gain[c] * std::sin(2.0 * std::numbers::pi * cfg.mains_hz * t + mains_phase) +
                           detail::blink_gain(label) * blink[i];
          X(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = detail::quantize(v);
        }
        if (coupled) {
          // Expected power the coupled generator puts on this channel.
          const double g2 = mu_gain[c] * mu_gain[c];
          std::vector<double> per_window;
          for (const auto& w : windows) {
            double acc = 0.0;
            for (std::size_t i = w.start; i < w.end; ++i) acc += g2 * mu_power[i];
            per_window.push_back(acc / static_cast<double>(w.size()));
          }
          truth.ideal_mu_power[label] = std::move(per_window);
        }
      }
      Eigen::VectorXd force(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) force(static_cast<Eigen::Index>(i)) = detail::quantize(prof.measured[i]);
      for (const auto& w : windows) {
        double acc = 0.0;
        for (std::size_t i = w.start; i < w.end; ++i) acc += force(static_cast<Eigen::Index>(i));
        truth.window_force.push_back(acc / static_cast<double>(w.size()));
      }
      out.trials.push_back(Trial{sid, tid, weights[static_cast<std::size_t>(k)],
                                 SignalMatrix(std::move(X), cfg.fs, cfg.montage), ForceTrace{std::move(force), cfg.fs}});
      out.truth.push_back(std::move(truth));
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const TrialTruth& t) {
  nlohmann::ordered_json j;
  j["subject_id"] = t.subject_id;
  j["trial_id"] = t.trial_id;
  j["coupled_channels"] = t.coupled_channels;
  j["coupling"] = t.coupling;
  j["drive_noise_sd"] = t.drive_noise_sd;
  j["erd_depth"] = t.erd_depth;
  j["erd_saturation_n"] = t.erd_saturation_n;
  j["window"] = {{"width_s", t.window.width_s}, {"step_s", t.window.step_s}};
  j["window_force"] = t.window_force;
  j["ideal_mu_power"] = t.ideal_mu_power;
  return j;
}

inline void write_synthetic(const fs::path& root, const SyntheticDataset& ds, PayloadFormat fmt = PayloadFormat::binary) {
  write_dataset(root, ds.trials, fmt);
  for (const auto& t : ds.truth) {
    const auto p = root / ("subject_" + t.subject_id) / ("trial_" + t.trial_id + ".truth.json");
    detail::atomic_write(p, to_json(t).dump(2) + "\n");
  }
}

// ---------------------------------------------------------------------------
// External (pre-converted) recordings
// ---------------------------------------------------------------------------

// Mapping manifest:
// {
//   "fs": 500,
//   "channels": ["C3", ...],              EEG column names, kept in this order
//   "force_columns": ["f_index", "f_thumb"],
//   "subjects": [{"subject_id": "1",
//                 "trials": [{"file": "s1_t1.csv", "trial_id": "1", "weight_g": 165, "fs": 500}]}]
// }
// File paths are relative to the mapping file's directory. Total force is the
// sum of the force columns.
inline TrialSet import_external(const fs::path& mapping_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file(mapping_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + mapping_path.string() + "': invalid mapping manifest: " + e.what());
  }
  const fs::path base = mapping_path.parent_path();
  TrialSet out;
  try {
    const auto channels = m.at("channels").get<std::vector<std::string>>();
    const auto force_cols = m.at("force_columns").get<std::vector<std::string>>();
    if (channels.empty() || force_cols.empty()) throw ConfigError("import_external: channels and force_columns must be non-empty");
    std::optional<double> fs_all = m.contains("fs") ? std::optional<double>(m["fs"].get<double>()) : std::nullopt;
    for (const auto& subj : m.at("subjects")) {
      const auto sid = subj.at("subject_id").get<std::string>();
      for (const auto& tr : subj.at("trials")) {
        const double tfs = tr.contains("fs") ? tr["fs"].get<double>() : fs_all.value_or(0.0);
        if (!(tfs > 0.0)) throw ConfigError("import_external: no sampling rate for subject " + sid);
        if (fs_all && *fs_all != tfs) {
          throw DataError("import_external: sampling rate mismatch (" + std::to_string(tfs) + " vs " + std::to_string(*fs_all) + ")");
        }
        fs_all = tfs;
        const auto t = detail::read_csv(base / tr.at("file").get<std::string>());
        auto need = [&](const std::string& name) {
          const auto j = t.column(name);
          if (j < 0) {
            std::string avail;
            for (const auto& h : t.header) avail += (avail.empty() ? "" : ", ") + h;
            throw DataError("import_external: column '" + name + "' missing from '" + tr.at("file").get<std::string>() +
                            "'; available columns: " + avail);
          }
          return static_cast<std::size_t>(j);
        };
        const std::size_t n = t.columns.empty() ? 0 : t.columns.front().size();
        Eigen::MatrixXd X(static_cast<Eigen::Index>(channels.size()), static_cast<Eigen::Index>(n));
        for (std::size_t c = 0; c < channels.size(); ++c) {
          const auto j = need(channels[c]);
          for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = t.columns[j][i];
        }
        Eigen::VectorXd force = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (const auto& fc : force_cols) {
          const auto j = need(fc);
          for (std::size_t i = 0; i < n; ++i) force(static_cast<Eigen::Index>(i)) += t.columns[j][i];
        }
        out.push_back(Trial{sid, tr.at("trial_id").get<std::string>(), tr.value("weight_g", 0.0),
                            SignalMatrix(std::move(X), tfs, channels), ForceTrace{std::move(force), tfs}});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + mapping_path.string() + "': malformed mapping manifest: " + e.what());
  }
  return out;
}

}  // namespace forcedecode
