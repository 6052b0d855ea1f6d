#include <gtest/gtest.h>

#include "forcedecode/filter.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/signal.hpp"
#include "support/oracles.hpp"

using namespace forcedecode;

namespace {

SignalMatrix one_channel(const std::vector<double>& x, double fs) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = x[i];
  return SignalMatrix(std::move(m), fs, {"C3"});
}

std::vector<double> row(const SignalMatrix& s, Eigen::Index r = 0) {
  std::vector<double> out(s.n_samples());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.data()(r, static_cast<Eigen::Index>(i));
  return out;
}

// Amplitude over the middle of a 10 s record, clear of edge transients.
double steady_gain(const SosFilter& f, double hz, double fs = 500.0) {
  const auto x = oracle::sine(static_cast<std::size_t>(10 * fs), fs, hz);
  const auto y = f.filtfilt(x);
  return oracle::tone_amplitude(y, fs, hz, static_cast<std::size_t>(2 * fs), static_cast<std::size_t>(8 * fs));
}

}  // namespace

TEST(SignalMatrix, RejectsBadConstruction) {
  EXPECT_THROW(SignalMatrix(Eigen::MatrixXd::Zero(2, 10), 0.0, {"a", "b"}), ConfigError);
  EXPECT_THROW(SignalMatrix(Eigen::MatrixXd::Zero(2, 10), 500.0, {"a"}), DataError);
  EXPECT_THROW(SignalMatrix(Eigen::MatrixXd::Zero(2, 10), 500.0, {"a", "a"}), DataError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(1, 4);
  bad(0, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(SignalMatrix(bad, 500.0, {"a"}), NumericalError);
}

TEST(SignalMatrix, SelectKeepsRequestedOrder) {
  Eigen::MatrixXd m(3, 2);
  m << 1, 1, 2, 2, 3, 3;
  SignalMatrix s(m, 100.0, {"a", "b", "c"});
  const auto sel = s.select({"c", "a"});
  EXPECT_EQ(sel.channel_labels(), (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(sel.data()(0, 0), 3.0);
  EXPECT_EQ(sel.data()(1, 0), 1.0);
  EXPECT_THROW(s.select({"z"}), DataError);
}

TEST(ForceTrace, ClampIsOptIn) {
  ForceTrace f{Eigen::VectorXd::Constant(3, -0.1), 100.0};
  EXPECT_EQ(f.values(0), -0.1);
  EXPECT_EQ(f.clamped_nonnegative().values(0), 0.0);
}

TEST(BandFilter, DcIsRemoved) {
  const auto sig = one_channel(std::vector<double>(5000, 3.0), 500.0);
  const auto y = row(band_filter(sig, 0.5, 50.0));
  double ss = 0.0;
  for (std::size_t i = 500; i < 4500; ++i) ss += y[i] * y[i];
  EXPECT_LE(std::sqrt(ss / 4000.0), 1e-3 * 3.0);
}

TEST(BandFilter, PassbandAndStopbandGain) {
  const auto f = butterworth_bandpass(4, 0.5, 50.0, 500.0);
  const double pass = steady_gain(f, 10.0);
  EXPECT_GE(pass, 0.9);
  EXPECT_LE(pass, 1.0 + 1e-4);  // fit precision
  for (double hz : {1.0, 5.0, 10.0, 20.0, 40.0}) EXPECT_LE(f.magnitude(hz, 500.0), 1.0 + 1e-12) << hz;
  EXPECT_LE(steady_gain(f, 100.0), 0.1);
  // one octave below the low edge
  EXPECT_LE(f.magnitude(0.25, 500.0) * f.magnitude(0.25, 500.0), 0.1);
}

TEST(BandFilter, InvalidEdges) {
  EXPECT_THROW(butterworth_bandpass(4, 10.0, 5.0, 500.0), ConfigError);
  EXPECT_THROW(butterworth_bandpass(4, 0.5, 250.0, 500.0), ConfigError);
  EXPECT_THROW(butterworth_bandpass(4, -1.0, 50.0, 500.0), ConfigError);
}

TEST(BandFilter, UnstableSectionRejected) {
  Biquad b;
  b.a1 = -2.5;
  b.a2 = 1.2;
  EXPECT_THROW(SosFilter({b}), NumericalError);
}

TEST(Notch, LineAndNeighbourGain) {
  const auto f = iir_notch(50.0, 30.0, 500.0);
  EXPECT_LE(steady_gain(f, 50.0), 0.05);
  EXPECT_GE(steady_gain(f, 10.0), 0.9);
  EXPECT_GE(f.magnitude(45.0, 500.0), 0.9);
  EXPECT_GE(f.magnitude(55.0, 500.0), 0.9);
}

TEST(Notch, ZeroInZeroOut) {
  const auto y = row(powerline_notch(one_channel(std::vector<double>(1000, 0.0), 500.0), 50.0));
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Notch, LineOutOfRange) {
  const auto s = one_channel(std::vector<double>(100, 0.0), 500.0);
  EXPECT_THROW(powerline_notch(s, 0.0), ConfigError);
  EXPECT_THROW(powerline_notch(s, 260.0), ConfigError);
}

TEST(FilterProperty, Linearity) {
  Rng rng(11);
  const auto f = butterworth_bandpass(4, 0.5, 50.0, 500.0).then(iir_notch(50.0, 30.0, 500.0));
  std::vector<double> x(3000), y(3000), z(3000);
  const double a = 1.7, b = -0.4;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    z[i] = a * x[i] + b * y[i];
  }
  const auto fx = f.filtfilt(x), fy = f.filtfilt(y), fz = f.filtfilt(z);
  double scale = 0.0;
  for (double v : fz) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fz[i], a * fx[i] + b * fy[i], 1e-9 * scale);
}

TEST(FilterProperty, ZeroPhase) {
  Rng rng(5);
  // band-limited input: white noise through the same pass band once
  std::vector<double> x(5000);
  for (auto& v : x) v = rng.normal();
  const auto f = butterworth_bandpass(4, 0.5, 50.0, 500.0);
  x = f.filtfilt(x);
  const auto y = f.filtfilt(x);
  int best_lag = 999;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double acc = 0.0;
    for (int i = 500; i < 4500; ++i) acc += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + lag)];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 0);
}

TEST(FilterProperty, Deterministic) {
  const auto x = oracle::sine(2000, 500.0, 12.0);
  const auto f = butterworth_bandpass(4, 0.5, 50.0, 500.0);
  EXPECT_EQ(f.filtfilt(x), f.filtfilt(x));
}

TEST(SlidingWindows, Examples) {
  const WindowSpec spec{0.1, 0.05};
  const auto w = sliding_windows(500, 500.0, spec);
  ASSERT_EQ(w.size(), 19u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].size(), 50u);
    EXPECT_EQ(w[i].start, 25u * i);
  }
  EXPECT_EQ(sliding_windows(50, 500.0, spec).size(), 1u);
  EXPECT_THROW(sliding_windows(49, 500.0, spec), DataError);
}

TEST(SlidingWindows, InvalidSpec) {
  EXPECT_THROW((WindowSpec{0.05, 0.1}.validate()), ConfigError);
  EXPECT_THROW((WindowSpec{0.1, 0.0}.validate()), ConfigError);
}

TEST(SlidingWindows, CountFormulaProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const double fs = 100.0 + static_cast<double>(rng.index(900));
    const std::size_t w = 4 + rng.index(200);
    const std::size_t s = 1 + rng.index(w);
    const std::size_t n = w + rng.index(5000);
    const WindowSpec spec{static_cast<double>(w) / fs, static_cast<double>(s) / fs};
    const auto wins = sliding_windows(n, fs, spec);
    ASSERT_EQ(wins.size(), (n - w) / s + 1) << "n=" << n << " w=" << w << " s=" << s;
    EXPECT_LE(wins.back().end, n);
    EXPECT_GT(wins.back().end + s, n);
  }
}

TEST(AlignForce, ConstantAndRamp) {
  const WindowSpec spec{0.1, 0.05};
  const auto wins = sliding_windows(1000, 500.0, spec);
  const ForceTrace one{Eigen::VectorXd::Ones(1000), 500.0};
  for (double v : align_force(one, wins, 1000)) EXPECT_EQ(v, 1.0);
  const ForceTrace ramp{Eigen::VectorXd::LinSpaced(1000, 0.0, 1.0), 500.0};
  const auto t = align_force(ramp, wins, 1000);
  for (Eigen::Index i = 1; i < t.size(); ++i) EXPECT_GT(t(i), t(i - 1));
  const auto last = align_force(ramp, wins, 1000, ForceAggregation::last_sample);
  EXPECT_DOUBLE_EQ(last(0), ramp.values(49));
}

TEST(AlignForce, LengthMismatch) {
  const auto wins = sliding_windows(1000, 500.0, {});
  const ForceTrace shorter{Eigen::VectorXd::Ones(900), 500.0};
  EXPECT_THROW(align_force(shorter, wins, 1000), DataError);
}

TEST(InteriorWindows, EdgesExcluded) {
  const auto wins = sliding_windows(5000, 500.0, {});
  const auto in = interior_windows(wins, 5000, 500.0, 1.0);
  ASSERT_FALSE(in.empty());
  EXPECT_GE(in.front().start, 500u);
  EXPECT_LE(in.back().end, 4500u);
}
