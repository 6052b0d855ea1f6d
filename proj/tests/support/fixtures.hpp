#pragma once

// Shared synthetic fixtures for the unit tests and the acceptance binary.

#include <stdexcept>

#include "forcedecode/forcedecode.hpp"
#include "support/oracles.hpp"

namespace fixture {

using namespace forcedecode;

inline Eigen::MatrixXd gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  return X;
}

// Sinusoid 7 Hz, sawtooth 13 Hz, uniform noise; 60 s at 250 Hz, each scaled
// to unit variance.
inline Eigen::MatrixXd desk_sources(std::uint64_t seed) {
  const double fs = 250.0;
  const Eigen::Index n = 60 * 250;
  Rng rng(seed);
  Eigen::MatrixXd S(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    S(0, i) = std::sin(2.0 * oracle::kPi * 7.0 * t);
    const double ph = 13.0 * t;
    S(1, i) = 2.0 * (ph - std::floor(ph)) - 1.0;
    S(2, i) = rng.uniform(-1.0, 1.0);
  }
  for (Eigen::Index r = 0; r < 3; ++r) {
    const double m = S.row(r).mean();
    S.row(r).array() -= m;
    S.row(r) /= std::sqrt(S.row(r).squaredNorm() / static_cast<double>(n));
  }
  return S;
}

inline Eigen::MatrixXd random_mixing(Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd A(d, d);
  do {
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.uniform(-1.0, 1.0);
  } while (std::abs(A.determinant()) < 0.2);
  return A;
}

inline SignalMatrix as_signal(Eigen::MatrixXd X, double fs, std::vector<std::string> labels = {}) {
  if (labels.empty())
    for (Eigen::Index i = 0; i < X.rows(); ++i) labels.push_back("ch" + std::to_string(i));
  return SignalMatrix(std::move(X), fs, std::move(labels));
}

// Power of the tone at hz summed over channels. A least-squares fit at the
// exact frequency, so broadband sources barely register.
inline double power_near(const SignalMatrix& s, double hz) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < s.data().rows(); ++c) {
    std::vector<double> x(s.n_samples());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = s.data()(c, static_cast<Eigen::Index>(j));
    const double a = oracle::tone_amplitude(x, s.fs(), hz, 0, x.size());
    acc += 0.5 * a * a;
  }
  return acc;
}

// 4 channels: two broadband sources, one pure 50 Hz source, one 7 Hz tone.
struct LineMixture {
  SignalMatrix sig;
  Eigen::MatrixXd S;
  Eigen::Index line_source = 2;
};

inline LineMixture line_mixture(std::uint64_t seed) {
  const double fs = 250.0;
  const Eigen::Index n = 30 * 250;
  Rng rng(seed);
  Eigen::MatrixXd S(4, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    S(0, i) = rng.uniform(-1.0, 1.0);
    S(1, i) = std::sin(2.0 * oracle::kPi * 7.0 * t);
    S(2, i) = std::sin(2.0 * oracle::kPi * 50.0 * t);
    S(3, i) = rng.normal() * rng.normal();
  }
  const auto A = random_mixing(4, seed + 1);
  return {as_signal(A * S, fs, {"C3", "Cz", "P3", "C4"}), S, 2};
}

inline Eigen::Index matching_component(const Decomposition& dec, const Eigen::VectorXd& source) {
  Eigen::Index best = 0;
  double best_r = -1.0;
  for (Eigen::Index k = 0; k < dec.n_components(); ++k) {
    const Eigen::VectorXd s = dec.sources.row(k).transpose();
    const double r = std::abs((s.array() - s.mean()).matrix().dot((source.array() - source.mean()).matrix())) /
                     std::sqrt((s.array() - s.mean()).square().sum() * (source.array() - source.mean()).square().sum());
    if (r > best_r) {
      best_r = r;
      best = k;
    }
  }
  return best;
}

inline FeatureTable make_table(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names = {}) {
  FeatureTable t;
  t.values = X;
  t.target = y;
  t.window_times = Eigen::VectorXd::LinSpaced(X.rows(), 0.0, 0.05 * static_cast<double>(X.rows() - 1));
  if (names.empty())
    for (Eigen::Index j = 0; j < X.cols(); ++j) names.push_back("f" + std::to_string(j));
  t.feature_names = std::move(names);
  return t;
}

inline FeatureTable sine_task(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform(-2.0, 2.0);
    y(i) = std::sin(3.0 * X(i, 0)) + 0.5 * X(i, 0);
  }
  return make_table(X, y, {"x"});
}

// Shuffles the force samples under every test window of the run.
inline TrialSet permute_test_targets(TrialSet trials, const ProtocolRun& run, const PipelineConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& g : run.groups) {
    for (std::size_t i = 0; i < g.trials.size(); ++i) {
      auto it = std::find_if(trials.begin(), trials.end(), [&](const Trial& t) {
        return t.subject_id == g.trials[i].first && t.trial_id == g.trials[i].second;
      });
      if (it == trials.end()) throw std::logic_error("permute_test_targets: trial not in set");
      const auto wins = analysis_windows(it->signal.n_samples(), it->signal.fs(), cfg);
      std::vector<bool> in_test(it->signal.n_samples(), false);
      for (std::size_t k = 0; k < wins.size(); ++k)
        if (g.split[i][k] == Split::test)
          for (std::size_t j = wins[k].start; j < wins[k].end; ++j) in_test[j] = true;
      std::vector<Eigen::Index> idx;
      for (std::size_t j = 0; j < in_test.size(); ++j)
        if (in_test[j]) idx.push_back(static_cast<Eigen::Index>(j));
      std::vector<double> vals;
      for (auto j : idx) vals.push_back(it->force.values(j));
      rng.shuffle(vals);
      for (std::size_t k = 0; k < idx.size(); ++k) it->force.values(idx[k]) = vals[k];
    }
  }
  return trials;
}

inline std::string artifacts_json(const ProtocolRun& run) {
  std::string s;
  for (const auto& g : run.groups) {
    s += to_json(g.pipeline).dump();
    for (const auto& m : g.models) s += to_json(m).dump();
  }
  return s;
}

}  // namespace fixture
