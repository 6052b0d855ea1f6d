#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "forcedecode/error.hpp"

namespace forcedecode {

struct BandDef {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;

  void validate() const {
    if (!(lo_hz > 0.0) || !(lo_hz < hi_hz)) {
      throw ConfigError("band '" + name + "': require 0 < lo < hi");
    }
  }
};

inline BandDef mu_band() { return {"mu", 9.0, 11.0}; }
inline BandDef theta_band() { return {"theta", 4.0, 8.0}; }
inline std::vector<BandDef> default_bands() { return {mu_band(), theta_band()}; }

// One-sided power spectral density, power per Hz.
struct Spectrum {
  Eigen::VectorXd freqs;
  Eigen::VectorXd power;
  double df = 0.0;

  double total_power() const { return power.sum() * df; }
};

// Symmetric Hann taper.
inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return w;
}

// Zero-padded transform length giving roughly `resolution_hz` bin spacing,
// never shorter than the window itself.
inline std::size_t default_nfft(std::size_t n, double fs, double resolution_hz = 1.0) {
  const auto target = static_cast<std::size_t>(std::ceil(fs / resolution_hz));
  return std::max(n, target);
}

namespace detail {

// |X_k|^2 of the tapered window for the requested bins.
inline void periodogram_bins(std::span<const double> x, std::span<const double> taper, std::size_t nfft,
                             std::size_t k_lo, std::size_t k_hi, std::span<double> out) {
  const std::size_t n = x.size();
  std::vector<double> xw(n);
  for (std::size_t j = 0; j < n; ++j) xw[j] = x[j] * taper[j];
  if (k_hi - k_lo + 1 > 32) {
    // many bins: FFT over the zero-padded window
    xw.resize(nfft, 0.0);
    std::vector<std::complex<double>> spec;
    Eigen::FFT<double> fft;
    fft.fwd(spec, xw);
    for (std::size_t k = k_lo; k <= k_hi; ++k) out[k - k_lo] = std::norm(spec[k]);
    return;
  }
  std::vector<double> cos_t(nfft), sin_t(nfft);
  for (std::size_t m = 0; m < nfft; ++m) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(nfft);
    cos_t[m] = std::cos(a);
    sin_t[m] = std::sin(a);
  }
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    double re = 0.0, im = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      re += xw[j] * cos_t[idx];
      im -= xw[j] * sin_t[idx];
      idx += k;
      if (idx >= nfft) idx %= nfft;
    }
    out[k - k_lo] = re * re + im * im;
  }
}

inline double one_sided_factor(std::size_t k, std::size_t nfft) {
  return (k == 0 || (nfft % 2 == 0 && k == nfft / 2)) ? 1.0 : 2.0;
}

}  // namespace detail

// Hann-tapered periodogram |X_T(f)|^2 / T, one-sided, normalised by the taper
// power so that sum(power) * df equals sum((x*w)^2) / sum(w^2).
// nfft == 0 picks default_nfft(n, fs).
inline Spectrum psd(std::span<const double> window, double fs, std::size_t nfft = 0) {
  if (window.size() < 8) throw DataError("psd: window must have at least 8 samples");
  if (!(fs > 0.0)) throw ConfigError("psd: fs must be positive");
  const std::size_t n = window.size();
  if (nfft == 0) nfft = default_nfft(n, fs);
  if (nfft < n) throw ConfigError("psd: nfft shorter than the window");
  const auto w = hann(n);
  double wss = 0.0;
  for (double v : w) wss += v * v;
  const std::size_t nbins = nfft / 2 + 1;
  std::vector<double> raw(nbins);
  detail::periodogram_bins(window, w, nfft, 0, nbins - 1, raw);
  Spectrum s;
  s.df = fs / static_cast<double>(nfft);
  s.freqs.resize(static_cast<Eigen::Index>(nbins));
  s.power.resize(static_cast<Eigen::Index>(nbins));
  for (std::size_t k = 0; k < nbins; ++k) {
    s.freqs(static_cast<Eigen::Index>(k)) = static_cast<double>(k) * s.df;
    s.power(static_cast<Eigen::Index>(k)) = detail::one_sided_factor(k, nfft) * raw[k] / (fs * wss);
  }
  return s;
}

// Rectangle-rule integral over the bins whose centre lies in [lo, hi].
inline double band_power(const Spectrum& s, const BandDef& band) {
  band.validate();
  const double nyquist = s.freqs.size() ? s.freqs(s.freqs.size() - 1) : 0.0;
  if (band.hi_hz > nyquist + 1e-9) {
    throw DataError("band_power: band '" + band.name + "' extends past the spectrum range (" +
                    std::to_string(nyquist) + " Hz)");
  }
  double acc = 0.0;
  int hits = 0;
  for (Eigen::Index k = 0; k < s.freqs.size(); ++k) {
    if (s.freqs(k) >= band.lo_hz - 1e-9 && s.freqs(k) <= band.hi_hz + 1e-9) {
      acc += s.power(k);
      ++hits;
    }
  }
  if (hits == 0) throw DataError("band_power: no spectral bin falls inside band '" + band.name + "'");
  return acc * s.df;
}

// Same values as band_power(psd(window, fs, nfft), band) for every band, but
// only the bins inside the bands are evaluated.
inline std::vector<double> band_powers(std::span<const double> window, double fs, std::span<const BandDef> bands,
                                       std::size_t nfft = 0) {
  if (window.size() < 8) throw DataError("psd: window must have at least 8 samples");
  const std::size_t n = window.size();
  if (nfft == 0) nfft = default_nfft(n, fs);
  const auto w = hann(n);
  double wss = 0.0;
  for (double v : w) wss += v * v;
  const double df = fs / static_cast<double>(nfft);
  const std::size_t nbins = nfft / 2 + 1;
  std::vector<double> out;
  out.reserve(bands.size());
  for (const auto& b : bands) {
    b.validate();
    if (b.hi_hz > fs / 2.0 + 1e-9) throw DataError("band_power: band '" + b.name + "' extends past Nyquist");
    const auto k_lo = static_cast<std::size_t>(std::ceil((b.lo_hz - 1e-9) / df));
    const auto k_hi = std::min(nbins - 1, static_cast<std::size_t>(std::floor((b.hi_hz + 1e-9) / df)));
    if (k_lo > k_hi) throw DataError("band_power: no spectral bin falls inside band '" + b.name + "'");
    std::vector<double> raw(k_hi - k_lo + 1);
    detail::periodogram_bins(window, w, nfft, k_lo, k_hi, raw);
    double acc = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) acc += detail::one_sided_factor(k, nfft) * raw[k - k_lo];
    out.push_back(acc / (fs * wss) * df);
  }
  return out;
}

// Welch average of Hann periodograms over half-overlapping segments.
inline Spectrum welch(std::span<const double> x, double fs, std::size_t segment) {
  if (segment < 8) throw ConfigError("welch: segment must have at least 8 samples");
  if (x.size() < segment) segment = x.size();
  const std::size_t step = std::max<std::size_t>(1, segment / 2);
  Spectrum acc;
  std::size_t count = 0;
  for (std::size_t start = 0; start + segment <= x.size(); start += step) {
    auto s = psd(x.subspan(start, segment), fs, segment);
    if (count == 0) {
      acc = std::move(s);
    } else {
      acc.power += s.power;
    }
    ++count;
  }
  acc.power /= static_cast<double>(count);
  return acc;
}

}  // namespace forcedecode
