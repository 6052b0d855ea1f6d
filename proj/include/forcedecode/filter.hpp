#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "forcedecode/error.hpp"
#include "forcedecode/signal.hpp"

namespace forcedecode {

// Normalised second-order section (a0 == 1), transposed direct form II.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

  std::complex<double> response(double f, double fs) const {
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }

  bool stable() const {
    // Schur-Cohn conditions for 1 + a1 z^-1 + a2 z^-2.
    return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
  }
};

class SosFilter {
 public:
  SosFilter() = default;
  explicit SosFilter(std::vector<Biquad> sections) : sections_(std::move(sections)) {
    for (const auto& s : sections_) {
      if (!s.stable() || !std::isfinite(s.b0 + s.b1 + s.b2 + s.a1 + s.a2)) {
        throw NumericalError("SosFilter: unstable section (a1=" + std::to_string(s.a1) +
                             ", a2=" + std::to_string(s.a2) + ")");
      }
    }
  }

  const std::vector<Biquad>& sections() const noexcept { return sections_; }
  bool empty() const noexcept { return sections_.empty(); }

  SosFilter then(const SosFilter& other) const {
    auto s = sections_;
    s.insert(s.end(), other.sections_.begin(), other.sections_.end());
    return SosFilter(std::move(s));
  }

  double magnitude(double f, double fs) const {
    std::complex<double> h{1.0, 0.0};
    for (const auto& s : sections_) h *= s.response(f, fs);
    return std::abs(h);
  }

  // Causal pass. Section states start at the steady state for a constant
  // input equal to `x[0]` so a DC offset produces no start-up step.
  void filter_inplace(std::span<double> x) const {
    if (x.empty()) return;
    double u = x[0];
    for (const auto& s : sections_) {
      const double y_ss = s.dc_gain() * u;
      double z1 = y_ss - s.b0 * u;
      double z2 = s.b2 * u - s.a2 * y_ss;
      for (double& v : x) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
      }
      u = y_ss;
    }
  }

  // Zero-phase forward-backward pass with odd-reflection padding at both ends.
  std::vector<double> filtfilt(std::span<const double> x) const {
    const std::size_t n = x.size();
    if (n == 0 || sections_.empty()) return {x.begin(), x.end()};
    const std::size_t pad = std::min<std::size_t>(n - 1, 3 * (2 * sections_.size() + 1));
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
    for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    filter_inplace(ext);
    std::reverse(ext.begin(), ext.end());
    filter_inplace(ext);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
  }

  SignalMatrix filtfilt(const SignalMatrix& sig) const {
    Eigen::MatrixXd out(sig.data().rows(), sig.data().cols());
    std::vector<double> row(sig.n_samples());
    for (Eigen::Index c = 0; c < sig.data().rows(); ++c) {
      for (Eigen::Index j = 0; j < sig.data().cols(); ++j) row[static_cast<std::size_t>(j)] = sig.data()(c, j);
      const auto y = filtfilt(row);
      for (Eigen::Index j = 0; j < sig.data().cols(); ++j) out(c, j) = y[static_cast<std::size_t>(j)];
    }
    if (!out.allFinite()) throw NumericalError("filtfilt: output is not finite");
    return sig.with_data(std::move(out));
  }

 private:
  std::vector<Biquad> sections_;
};

namespace detail {

enum class PassKind { lowpass, highpass };

// Butterworth via the bilinear transform with pre-warped cutoff.
inline SosFilter butterworth(int order, double cutoff_hz, double fs, PassKind kind) {
  if (order < 1 || order > 16) throw ConfigError("butterworth: order must be in [1, 16]");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
    throw ConfigError("butterworth: cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, fs/2)");
  }
  const double k = 2.0 * fs;
  const double warped = k * std::tan(std::numbers::pi * cutoff_hz / fs);
  std::vector<Biquad> sections;
  const double zero = kind == PassKind::lowpass ? -1.0 : 1.0;
  // Normalise each section to unit gain at DC (lowpass) or Nyquist (highpass).
  const double ref = kind == PassKind::lowpass ? 0.0 : fs / 2.0;

  auto analog_pole = [&](int i) {
    const double theta = std::numbers::pi * (2.0 * i + order + 1) / (2.0 * order);
    const std::complex<double> p = std::polar(1.0, theta);
    return kind == PassKind::lowpass ? warped * p : warped / p;
  };
  auto bilinear = [&](std::complex<double> s) { return (k + s) / (k - s); };

  for (int i = 0; i < order / 2; ++i) {
    const auto z = bilinear(analog_pole(i));
    Biquad s;
    s.b0 = 1.0;
    s.b1 = -2.0 * zero;
    s.b2 = 1.0;
    s.a1 = -2.0 * z.real();
    s.a2 = std::norm(z);
    const double g = std::abs(s.response(ref, fs));
    s.b0 /= g;
    s.b1 /= g;
    s.b2 /= g;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    const auto z = bilinear(analog_pole((order - 1) / 2));
    Biquad s;
    s.b0 = 1.0;
    s.b1 = -zero;
    s.a1 = -z.real();
    const double g = std::abs(s.response(ref, fs));
    s.b0 /= g;
    s.b1 /= g;
    sections.push_back(s);
  }
  return SosFilter(std::move(sections));
}

}  // namespace detail

inline SosFilter butterworth_lowpass(int order, double cutoff_hz, double fs) {
  return detail::butterworth(order, cutoff_hz, fs, detail::PassKind::lowpass);
}

inline SosFilter butterworth_highpass(int order, double cutoff_hz, double fs) {
  return detail::butterworth(order, cutoff_hz, fs, detail::PassKind::highpass);
}

// Band-pass as a Butterworth high-pass at `low_hz` cascaded with a
// Butterworth low-pass at `high_hz`. low_hz == 0 leaves out the high-pass.
inline SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (!(low_hz >= 0.0) || !(low_hz < high_hz) || !(high_hz < fs / 2.0)) {
    throw ConfigError("band_filter: require 0 <= low < high < fs/2 (got " + std::to_string(low_hz) + ", " +
                      std::to_string(high_hz) + ", fs " + std::to_string(fs) + ")");
  }
  auto lp = butterworth_lowpass(order, high_hz, fs);
  if (low_hz == 0.0) return lp;
  return butterworth_highpass(order, low_hz, fs).then(lp);
}

// Second-order IIR notch (bandwidth line_hz / q).
inline SosFilter iir_notch(double line_hz, double q, double fs) {
  if (!(line_hz > 0.0) || !(line_hz < fs / 2.0)) {
    throw ConfigError("powerline_notch: line frequency " + std::to_string(line_hz) + " Hz outside (0, fs/2)");
  }
  if (!(q > 0.0)) throw ConfigError("powerline_notch: q must be positive");
  const double w0 = 2.0 * std::numbers::pi * line_hz / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  return SosFilter({s});
}

// Zero-phase Butterworth band-pass applied to every channel.
inline SignalMatrix band_filter(const SignalMatrix& sig, double low_hz, double high_hz, int order = 4) {
  return butterworth_bandpass(order, low_hz, high_hz, sig.fs()).filtfilt(sig);
}

// Zero-phase mains notch applied to every channel.
inline SignalMatrix powerline_notch(const SignalMatrix& sig, double line_hz, double q = 30.0) {
  return iir_notch(line_hz, q, sig.fs()).filtfilt(sig);
}

}  // namespace forcedecode
