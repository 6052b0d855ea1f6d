#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "forcedecode/decomposition.hpp"
#include "forcedecode/error.hpp"
#include "forcedecode/features.hpp"
#include "forcedecode/signal.hpp"
#include "forcedecode/spectral.hpp"

namespace forcedecode {

// ---------------------------------------------------------------------------
// Component labelling
// ---------------------------------------------------------------------------

enum class ComponentKind { brain, line_noise, eye, muscle, heart, other };

inline std::string to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::brain: return "brain";
    case ComponentKind::line_noise: return "line_noise";
    case ComponentKind::eye: return "eye";
    case ComponentKind::muscle: return "muscle";
    case ComponentKind::heart: return "heart";
    case ComponentKind::other: return "other";
  }
  return "other";
}

struct ComponentLabel {
  ComponentKind kind = ComponentKind::brain;
  double confidence = 0.0;
  std::map<std::string, double> evidence;
};

// Thresholds of the rule-based labeller. Rules are tried in the order
// line noise, eye, muscle, heart; the first that fires decides.
struct LabelerConfig {
  double mains_hz = 50.0;
  double line_halfwidth_hz = 1.0;
  double line_fraction = 0.6;
  BandDef delta{"delta", 1.0, 4.0};
  double eye_delta_fraction = 0.6;
  double eye_frontal_mass = 0.5;
  std::vector<std::string> frontal_labels{"Fp1", "Fp2", "F7", "F8"};
  double muscle_hf_hz = 30.0;
  double muscle_fraction = 0.5;
  double heart_min_period_s = 0.6;
  double heart_max_period_s = 1.2;
  double heart_prominence = 0.3;
  double spectrum_segment_s = 2.0;
  double max_analysis_s = 60.0;
};

// Any callable mapping a decomposition to one label per component can stand
// in for the rule-based labeller.
using ComponentLabeler = std::function<std::vector<ComponentLabel>(const Decomposition&)>;

namespace detail {

inline double power_between(const Spectrum& s, double lo, double hi) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < s.freqs.size(); ++k) {
    if (s.freqs(k) >= lo && s.freqs(k) <= hi) acc += s.power(k);
  }
  return acc * s.df;
}

// Highest biased autocorrelation peak after the first zero crossing.
// Returns {lag_s, value}; {0, 0} when the signal never decorrelates.
inline std::pair<double, double> dominant_period(std::span<const double> x, double fs, double max_lag_s) {
  const std::size_t n = x.size();
  const auto max_lag = std::min<std::size_t>(n - 1, static_cast<std::size_t>(max_lag_s * fs));
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(x.begin(), x.end());
  for (double& v : c) v -= mean;
  double r0 = 0.0;
  for (double v : c) r0 += v * v;
  if (!(r0 > 0.0)) return {0.0, 0.0};
  // biased autocorrelation through a zero-padded FFT
  std::size_t nfft = 1;
  while (nfft < 2 * n) nfft <<= 1;
  c.resize(nfft, 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, c);
  for (auto& z : spec) z = std::norm(z);
  std::vector<double> acf;
  fft.inv(acf, spec);
  bool crossed = false;
  double best = 0.0;
  std::size_t best_lag = 0;
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    const double r = acf[lag] / acf[0];
    if (!crossed) {
      crossed = r <= 0.0;
      continue;
    }
    if (r > best) {
      best = r;
      best_lag = lag;
    }
  }
  return {static_cast<double>(best_lag) / fs, best};
}

}  // namespace detail

inline std::vector<ComponentLabel> label_components(const Decomposition& dec, double fs,
                                                    const std::vector<std::string>& channel_labels,
                                                    const LabelerConfig& cfg = {}) {
  if (static_cast<std::size_t>(dec.mixing.rows()) != channel_labels.size()) {
    throw DataError("label_components: channel labels do not match the mixing matrix");
  }
  std::vector<ComponentLabel> out;
  const auto n_use = std::min<Eigen::Index>(dec.sources.cols(), static_cast<Eigen::Index>(cfg.max_analysis_s * fs));
  const auto segment = static_cast<std::size_t>(std::max(8.0, std::round(cfg.spectrum_segment_s * fs)));
  std::vector<bool> frontal(channel_labels.size(), false);
  for (std::size_t i = 0; i < channel_labels.size(); ++i) {
    frontal[i] = std::find(cfg.frontal_labels.begin(), cfg.frontal_labels.end(), channel_labels[i]) != cfg.frontal_labels.end();
  }
  std::vector<double> x(static_cast<std::size_t>(n_use));
  for (Eigen::Index k = 0; k < dec.n_components(); ++k) {
    for (Eigen::Index j = 0; j < n_use; ++j) x[static_cast<std::size_t>(j)] = dec.sources(k, j);
    const Spectrum s = welch(x, fs, segment);
    const double total = std::max(s.total_power(), 1e-300);
    const double nyq = fs / 2.0;
    const double line = cfg.mains_hz < nyq
                            ? detail::power_between(s, cfg.mains_hz - cfg.line_halfwidth_hz, cfg.mains_hz + cfg.line_halfwidth_hz) / total
                            : 0.0;
    const double delta = detail::power_between(s, cfg.delta.lo_hz, cfg.delta.hi_hz) / total;
    const double hf = detail::power_between(s, cfg.muscle_hf_hz, nyq) / total;
    const Eigen::VectorXd w2 = dec.mixing.col(k).array().square();
    double fm = 0.0;
    for (std::size_t i = 0; i < frontal.size(); ++i) if (frontal[i]) fm += w2(static_cast<Eigen::Index>(i));
    const double frontal_mass = w2.sum() > 0.0 ? fm / w2.sum() : 0.0;
    const auto [period, peak] = detail::dominant_period(x, fs, 2.0 * cfg.heart_max_period_s);

    ComponentLabel l;
    l.evidence = {{"line_fraction", line},
                  {"delta_fraction", delta},
                  {"frontal_mass", frontal_mass},
                  {"hf_fraction", hf},
                  {"periodicity", peak},
                  {"period_s", period}};
    const bool heart_period = period >= cfg.heart_min_period_s && period <= cfg.heart_max_period_s;
    if (line >= cfg.line_fraction) {
      l.kind = ComponentKind::line_noise;
      l.confidence = line;
    } else if (delta >= cfg.eye_delta_fraction && frontal_mass >= cfg.eye_frontal_mass) {
      l.kind = ComponentKind::eye;
      l.confidence = delta;
    } else if (hf >= cfg.muscle_fraction) {
      l.kind = ComponentKind::muscle;
      l.confidence = hf;
    } else if (heart_period && peak >= cfg.heart_prominence) {
      l.kind = ComponentKind::heart;
      l.confidence = peak;
    } else {
      l.kind = ComponentKind::brain;
      l.confidence = 1.0 - std::max({line, delta * frontal_mass, hf, heart_period ? peak : 0.0});
    }
    l.confidence = std::clamp(l.confidence, 0.0, 1.0);
    out.push_back(std::move(l));
  }
  return out;
}

inline std::vector<ComponentLabel> label_components(const Decomposition& dec, const LabelerConfig& cfg = {}) {
  return label_components(dec, dec.fs, dec.channel_labels, cfg);
}

inline std::vector<std::size_t> brain_components(const std::vector<ComponentLabel>& labels) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].kind == ComponentKind::brain) keep.push_back(i);
  return keep;
}

// Reconstruction from the components labelled brain.
inline SignalMatrix remove_artifacts(const Decomposition& dec, const std::vector<ComponentLabel>& labels) {
  if (labels.size() != static_cast<std::size_t>(dec.n_components())) {
    throw DataError("remove_artifacts: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(dec.n_components()) + " components");
  }
  const auto keep = brain_components(labels);
  if (keep.empty()) {
    std::string report;
    for (std::size_t i = 0; i < labels.size(); ++i) report += " IC" + std::to_string(i) + "=" + to_string(labels[i].kind);
    throw DataError("remove_artifacts: no component labelled brain;" + report);
  }
  return reconstruct(dec, keep);
}

// ---------------------------------------------------------------------------
// Force-covariance selection
// ---------------------------------------------------------------------------

inline std::vector<std::string> paper_channel_list() {
  return {"C3", "CP1", "CP2", "Cz", "FC2", "FC6", "Fp1", "P3", "C4"};
}

enum class ChannelPolicy { fixed_list, ranked };

struct SelectionConfig {
  ChannelPolicy channel_policy = ChannelPolicy::fixed_list;
  std::vector<std::string> fixed_channels = paper_channel_list();
  std::size_t top_channels = 9;
  std::size_t top_components = 5;
  std::vector<BandDef> bands = default_bands();
};

struct SelectionReport {
  std::vector<std::string> channel_labels;
  Eigen::VectorXd channel_covariance;    // |cov(z-scored envelope, force)|, one per channel
  Eigen::VectorXd component_covariance;  // same for components
  std::vector<std::string> chosen_channels;
  std::vector<std::size_t> chosen_components;
  std::string channel_policy;
  std::size_t top_channels = 0;
  std::size_t top_components = 0;
  std::size_t n_windows = 0;
};

namespace detail {

// Summed band power per fit window, one column per row of `data`.
inline Eigen::MatrixXd band_envelope(const Eigen::MatrixXd& data, double fs, const WindowedRecording& rec,
                                     std::span<const BandDef> bands) {
  const auto n_fit = static_cast<Eigen::Index>(rec.n_fit());
  Eigen::MatrixXd env(n_fit, data.rows());
  std::vector<double> buf;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < rec.windows.size(); ++i) {
    if (!rec.fit_mask[i]) continue;
    const auto& w = rec.windows[i];
    buf.resize(w.size());
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
      for (std::size_t j = 0; j < w.size(); ++j) buf[j] = data(c, static_cast<Eigen::Index>(w.start + j));
      const auto bp = band_powers(buf, fs, bands);
      env(at, c) = std::accumulate(bp.begin(), bp.end(), 0.0);
    }
    ++at;
  }
  return env;
}

inline Eigen::VectorXd fit_targets(std::span<const WindowedRecording> recs) {
  std::size_t n = 0;
  for (const auto& r : recs) n += r.n_fit();
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::Index at = 0;
  for (const auto& r : recs)
    for (std::size_t i = 0; i < r.windows.size(); ++i)
      if (r.fit_mask[i]) y(at++) = r.target(static_cast<Eigen::Index>(i));
  return y;
}

// |cov| between each z-scored envelope column and the force target.
inline Eigen::VectorXd envelope_force_covariance(const Eigen::MatrixXd& env, const Eigen::VectorXd& y) {
  if (y.size() < 2) throw DataError("force covariance: need at least two fit windows");
  const double ym = y.mean();
  const Eigen::VectorXd yc = y.array() - ym;
  if (!(yc.squaredNorm() > 1e-24 * (1.0 + ym * ym) * static_cast<double>(y.size()))) {
    throw DataError("force covariance is undefined for a constant force trace; use the fixed channel list");
  }
  Eigen::VectorXd out(env.cols());
  const double n = static_cast<double>(y.size());
  for (Eigen::Index c = 0; c < env.cols(); ++c) {
    const Eigen::VectorXd e = env.col(c).array() - env.col(c).mean();
    const double sd = std::sqrt(e.squaredNorm() / n);
    out(c) = sd > 0.0 ? std::abs(e.dot(yc) / n / sd) : 0.0;
  }
  return out;
}

inline std::vector<std::size_t> argsort_desc(const Eigen::VectorXd& v) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return v(static_cast<Eigen::Index>(a)) > v(static_cast<Eigen::Index>(b));
  });
  return idx;
}

}  // namespace detail

// Channels ranked by force covariance of their Mu+Theta power envelope over
// fit windows. The chosen set follows the configured policy.
inline SelectionReport rank_channels_by_force_cov(std::span<const WindowedRecording> recs, const SelectionConfig& cfg = {}) {
  if (recs.empty()) throw DataError("rank_channels_by_force_cov: no recordings");
  const auto& labels = recs.front().signal.channel_labels();
  SelectionReport rep;
  rep.channel_labels = labels;
  rep.channel_policy = cfg.channel_policy == ChannelPolicy::fixed_list ? "fixed_list" : "ranked";
  rep.top_channels = cfg.top_channels;

  const Eigen::VectorXd y = detail::fit_targets(recs);
  rep.n_windows = static_cast<std::size_t>(y.size());
  const bool need_cov = cfg.channel_policy == ChannelPolicy::ranked;
  const double ym = y.size() ? y.mean() : 0.0;
  const bool constant = y.size() < 2 || (y.array() - ym).abs().maxCoeff() <= 1e-12 * (1.0 + std::abs(ym));
  if (need_cov || !constant) {
    Eigen::MatrixXd env(y.size(), static_cast<Eigen::Index>(labels.size()));
    Eigen::Index at = 0;
    for (const auto& r : recs) {
      if (r.signal.channel_labels() != labels) throw DataError("rank_channels_by_force_cov: channel labels differ");
      const auto e = detail::band_envelope(r.signal.data(), r.signal.fs(), r, cfg.bands);
      env.middleRows(at, e.rows()) = e;
      at += e.rows();
    }
    rep.channel_covariance = detail::envelope_force_covariance(env, y);
  }

  if (cfg.channel_policy == ChannelPolicy::fixed_list) {
    for (const auto& l : labels) {
      if (std::find(cfg.fixed_channels.begin(), cfg.fixed_channels.end(), l) != cfg.fixed_channels.end()) {
        rep.chosen_channels.push_back(l);
      }
    }
    if (rep.chosen_channels.empty()) throw DataError("channel selection: none of the fixed labels is present");
  } else {
    if (cfg.top_channels == 0) throw ConfigError("channel selection: top_channels must be positive");
    const auto order = detail::argsort_desc(rep.channel_covariance);
    const auto k = std::min(cfg.top_channels, order.size());
    for (std::size_t i = 0; i < k; ++i) rep.chosen_channels.push_back(labels[order[i]]);
  }
  return rep;
}

inline SelectionReport rank_channels_by_force_cov(const SignalMatrix& sig, const ForceTrace& force, const WindowSpec& spec,
                                                  const SelectionConfig& cfg = {}) {
  const auto rec = make_windowed(sig, force, spec);
  return rank_channels_by_force_cov(std::span(&rec, 1), cfg);
}

// Components ranked the same way. `decs[i]` holds the sources for `recs[i]`.
inline SelectionReport rank_components_by_force_cov(std::span<const Decomposition> decs,
                                                    std::span<const WindowedRecording> recs, std::size_t top_k,
                                                    const std::vector<BandDef>& bands = default_bands()) {
  if (decs.empty() || decs.size() != recs.size()) throw DataError("rank_components_by_force_cov: decompositions/recordings mismatch");
  const auto K = static_cast<std::size_t>(decs.front().n_components());
  if (top_k == 0) throw ConfigError("component selection: top_k must be positive");
  if (top_k > K) {
    throw ConfigError("component selection: top_k " + std::to_string(top_k) + " exceeds " + std::to_string(K) + " components");
  }
  const Eigen::VectorXd y = detail::fit_targets(recs);
  Eigen::MatrixXd env(y.size(), static_cast<Eigen::Index>(K));
  Eigen::Index at = 0;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    if (decs[r].sources.cols() != static_cast<Eigen::Index>(recs[r].signal.n_samples())) {
      throw DataError("rank_components_by_force_cov: sources are not aligned with the recording");
    }
    const auto e = detail::band_envelope(decs[r].sources, decs[r].fs, recs[r], bands);
    env.middleRows(at, e.rows()) = e;
    at += e.rows();
  }
  SelectionReport rep;
  rep.component_covariance = detail::envelope_force_covariance(env, y);
  rep.top_components = top_k;
  rep.n_windows = static_cast<std::size_t>(y.size());
  const auto order = detail::argsort_desc(rep.component_covariance);
  rep.chosen_components.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k));
  return rep;
}

inline SelectionReport rank_components_by_force_cov(const Decomposition& dec, const ForceTrace& force, const WindowSpec& spec,
                                                    std::size_t top_k = 5) {
  const SignalMatrix src(dec.sources, dec.fs, [&] {
    std::vector<std::string> names;
    for (Eigen::Index k = 0; k < dec.n_components(); ++k) names.push_back("IC" + std::to_string(k));
    return names;
  }(), dec.t0);
  const auto rec = make_windowed(src, force, spec);
  return rank_components_by_force_cov(std::span(&dec, 1), std::span(&rec, 1), top_k);
}

}  // namespace forcedecode
