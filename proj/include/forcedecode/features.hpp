#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forcedecode/decomposition.hpp"
#include "forcedecode/error.hpp"
#include "forcedecode/signal.hpp"
#include "forcedecode/spectral.hpp"

namespace forcedecode {

// ---------------------------------------------------------------------------
// Per-window statistics
// ---------------------------------------------------------------------------

struct ErpStats {
  double mean = 0.0;
  double mean_abs = 0.0;
  double auc = 0.0;       // trapezoid, signal x seconds
  double skewness = 0.0;  // standardised third moment
  double kurtosis = 0.0;  // standardised fourth moment, not excess
  double variance = 0.0;  // population

  static constexpr std::array<const char*, 6> names{"mean", "mean_abs", "auc", "skew", "kurt", "var"};
  std::array<double, 6> as_array() const { return {mean, mean_abs, auc, skewness, kurtosis, variance}; }
};

inline ErpStats erp_stats(std::span<const double> w, double fs) {
  if (w.size() < 4) throw DataError("erp_stats: window needs at least 4 samples");
  if (!(fs > 0.0)) throw ConfigError("erp_stats: fs must be positive");
  const double n = static_cast<double>(w.size());
  ErpStats s;
  for (double v : w) {
    s.mean += v;
    s.mean_abs += std::abs(v);
  }
  s.mean /= n;
  s.mean_abs /= n;
  const double dt = 1.0 / fs;
  for (std::size_t i = 1; i < w.size(); ++i) s.auc += 0.5 * (w[i - 1] + w[i]) * dt;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : w) {
    const double d = v - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2;
  // Constant window: higher moments are reported as 0.
  if (m2 > 1e-24 * (1.0 + s.mean * s.mean)) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2);
  }
  return s;
}

// Eq. ERDS = 100 * (active - baseline) / baseline, in percent.
inline double erds(double active_power, double baseline_power) {
  if (!(baseline_power > 0.0)) throw DataError("erds: baseline power must be positive");
  return 100.0 * (active_power - baseline_power) / baseline_power;
}

// ---------------------------------------------------------------------------
// Raw per-window features
// ---------------------------------------------------------------------------

// Rows are windows. erp columns: channel-major, 6 stats per channel.
// power columns: channel-major, one per band.
struct WindowFeatures {
  Eigen::MatrixXd erp;
  Eigen::MatrixXd power;
  Eigen::MatrixXd samples;  // raw window samples, channel-major
};

struct WindowFeatureRequest {
  bool erp = true;
  bool power = true;
  bool samples = false;
};

inline WindowFeatures window_features(const WindowedRecording& rec, std::span<const BandDef> bands,
                                      WindowFeatureRequest what = {}, std::size_t nfft = 0) {
  const auto& X = rec.signal.data();
  const auto C = static_cast<Eigen::Index>(rec.signal.n_channels());
  const auto nw = static_cast<Eigen::Index>(rec.windows.size());
  const auto B = static_cast<Eigen::Index>(bands.size());
  const double fs = rec.signal.fs();
  WindowFeatures out;
  if (what.erp) out.erp.resize(nw, C * 6);
  if (what.power) out.power.resize(nw, C * B);
  const std::size_t wlen = rec.windows.empty() ? 0 : rec.windows.front().size();
  if (what.samples) out.samples.resize(nw, C * static_cast<Eigen::Index>(wlen));
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < nw; ++i) {
    const auto& win = rec.windows[static_cast<std::size_t>(i)];
    if (win.end > rec.signal.n_samples()) throw DataError("window_features: window outside signal");
    buf.resize(win.size());
    for (Eigen::Index c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < win.size(); ++j) buf[j] = X(c, static_cast<Eigen::Index>(win.start + j));
      if (what.erp) {
        const auto st = erp_stats(buf, fs).as_array();
        for (Eigen::Index s = 0; s < 6; ++s) out.erp(i, c * 6 + s) = st[static_cast<std::size_t>(s)];
      }
      if (what.power) {
        const auto bp = band_powers(buf, fs, bands, nfft);
        for (Eigen::Index b = 0; b < B; ++b) out.power(i, c * B + b) = bp[static_cast<std::size_t>(b)];
      }
      if (what.samples) {
        if (win.size() != wlen) throw DataError("window_features: windows differ in length");
        for (std::size_t j = 0; j < wlen; ++j) out.samples(i, c * static_cast<Eigen::Index>(wlen) + static_cast<Eigen::Index>(j)) = buf[j];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline
// ---------------------------------------------------------------------------

struct Baseline {
  std::vector<std::string> channel_labels;
  std::vector<BandDef> bands;
  Eigen::MatrixXd power;  // channels x bands, strictly positive
  std::size_t n_windows_used = 0;
  double force_threshold_n = 0.5;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median of empty set");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Median band power over fit windows whose mean force is below the threshold.
inline Baseline estimate_baseline(std::span<const WindowedRecording> recs, std::span<const WindowFeatures> feats,
                                  std::span<const BandDef> bands, double threshold_n = 0.5) {
  if (recs.empty() || recs.size() != feats.size()) throw DataError("estimate_baseline: recordings/features mismatch");
  const auto& labels = recs.front().signal.channel_labels();
  const auto C = static_cast<Eigen::Index>(labels.size());
  const auto B = static_cast<Eigen::Index>(bands.size());
  std::vector<std::vector<double>> cells(static_cast<std::size_t>(C * B));
  std::size_t used = 0;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    if (recs[r].signal.channel_labels() != labels) throw DataError("estimate_baseline: channel labels differ");
    for (std::size_t i = 0; i < recs[r].windows.size(); ++i) {
      if (!recs[r].fit_mask[i] || !(recs[r].target(static_cast<Eigen::Index>(i)) < threshold_n)) continue;
      ++used;
      for (Eigen::Index k = 0; k < C * B; ++k) {
        cells[static_cast<std::size_t>(k)].push_back(feats[r].power(static_cast<Eigen::Index>(i), k));
      }
    }
  }
  if (used == 0) {
    throw DataError("estimate_baseline: no window with mean force below " + std::to_string(threshold_n) +
                    " N; ERDS needs rest windows");
  }
  Baseline b;
  b.channel_labels = labels;
  b.bands.assign(bands.begin(), bands.end());
  b.power.resize(C, B);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index k = 0; k < B; ++k) {
      const double m = detail::median(cells[static_cast<std::size_t>(c * B + k)]);
      b.power(c, k) = std::max(m, 1e-300);
    }
  }
  b.n_windows_used = used;
  b.force_threshold_n = threshold_n;
  return b;
}

inline Baseline estimate_baseline(const SignalMatrix& sig, const ForceTrace& force, const WindowSpec& spec,
                                  const std::vector<BandDef>& bands, double threshold_n = 0.5) {
  const auto rec = make_windowed(sig, force, spec);
  const auto feats = window_features(rec, bands, {.erp = false, .power = true});
  return estimate_baseline(std::span(&rec, 1), std::span(&feats, 1), bands, threshold_n);
}

// ---------------------------------------------------------------------------
// Feature tables
// ---------------------------------------------------------------------------

struct FeatureTable {
  Eigen::MatrixXd values;  // windows x features
  std::vector<std::string> feature_names;
  Eigen::VectorXd window_times;  // seconds, window centre
  Eigen::VectorXd target;        // newtons

  Eigen::Index n_rows() const { return values.rows(); }
  Eigen::Index n_features() const { return values.cols(); }

  void validate() const {
    if (static_cast<std::size_t>(values.cols()) != feature_names.size()) throw DataError("FeatureTable: name/column mismatch");
    if (values.rows() != target.size() || values.rows() != window_times.size()) {
      throw DataError("FeatureTable: row counts of values, times and targets differ");
    }
    std::vector<std::string> sorted = feature_names;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw DataError("FeatureTable: duplicate feature name");
    if (!values.allFinite() || !target.allFinite()) throw NumericalError("FeatureTable: non-finite values");
  }

  FeatureTable rows(const std::vector<Eigen::Index>& idx) const {
    FeatureTable t;
    t.feature_names = feature_names;
    t.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
    t.window_times.resize(static_cast<Eigen::Index>(idx.size()));
    t.target.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      t.values.row(r) = values.row(idx[i]);
      t.window_times(r) = window_times(idx[i]);
      t.target(r) = target(idx[i]);
    }
    return t;
  }

  // Columns whose name starts with any of the prefixes, in table order.
  FeatureTable columns_with_prefix(const std::vector<std::string>& prefixes) const {
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
      for (const auto& p : prefixes) {
        if (feature_names[j].rfind(p, 0) == 0) {
          keep.push_back(static_cast<Eigen::Index>(j));
          break;
        }
      }
    }
    return select_columns(keep);
  }

  // Columns whose name ends with the suffix.
  FeatureTable columns_with_suffix(const std::string& suffix) const {
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
      const auto& n = feature_names[j];
      if (n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0) {
        keep.push_back(static_cast<Eigen::Index>(j));
      }
    }
    return select_columns(keep);
  }

  FeatureTable select_columns(const std::vector<Eigen::Index>& keep) const {
    FeatureTable t;
    t.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      t.values.col(static_cast<Eigen::Index>(j)) = values.col(keep[j]);
      t.feature_names.push_back(feature_names[static_cast<std::size_t>(keep[j])]);
    }
    t.window_times = window_times;
    t.target = target;
    return t;
  }

  static FeatureTable concat_rows(std::span<const FeatureTable> parts) {
    FeatureTable t;
    if (parts.empty()) return t;
    t.feature_names = parts.front().feature_names;
    Eigen::Index n = 0;
    for (const auto& p : parts) {
      if (p.feature_names != t.feature_names) throw DataError("FeatureTable: cannot concatenate different schemas");
      n += p.n_rows();
    }
    t.values.resize(n, static_cast<Eigen::Index>(t.feature_names.size()));
    t.window_times.resize(n);
    t.target.resize(n);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      t.values.middleRows(at, p.n_rows()) = p.values;
      t.window_times.segment(at, p.n_rows()) = p.window_times;
      t.target.segment(at, p.n_rows()) = p.target;
      at += p.n_rows();
    }
    return t;
  }
};

enum class FeatureSet { erp, psd, erds, all, raw };

inline std::string to_string(FeatureSet s) {
  switch (s) {
    case FeatureSet::erp: return "erp";
    case FeatureSet::psd: return "psd";
    case FeatureSet::erds: return "erds";
    case FeatureSet::all: return "all";
    case FeatureSet::raw: return "raw";
  }
  return "?";
}

inline FeatureSet feature_set_from_string(const std::string& s) {
  if (s == "erp") return FeatureSet::erp;
  if (s == "psd") return FeatureSet::psd;
  if (s == "erds") return FeatureSet::erds;
  if (s == "all") return FeatureSet::all;
  if (s == "raw") return FeatureSet::raw;
  throw ConfigError("unknown feature set '" + s + "' (valid: erp, psd, erds, all, raw)");
}

struct FeatureConfig {
  FeatureSet set = FeatureSet::all;
  std::vector<BandDef> bands = default_bands();
  double pca_target = 0.95;
  double baseline_threshold_n = 0.5;
  std::size_t nfft = 0;
};

inline bool uses_erp(FeatureSet s) { return s == FeatureSet::erp || s == FeatureSet::all; }
inline bool uses_power(FeatureSet s) { return s == FeatureSet::psd || s == FeatureSet::erds || s == FeatureSet::all; }
inline bool uses_erds(FeatureSet s) { return s == FeatureSet::erds || s == FeatureSet::all; }

// Training-side state of the feature stage: ERDS baseline and the ERP
// standardisation + PCA. Fit on fit-masked windows only, then applied to
// every window.
class FeatureExtractor {
 public:
  static FeatureExtractor fit(std::span<const WindowedRecording> recs, std::span<const WindowFeatures> feats,
                              const FeatureConfig& cfg, std::optional<Baseline> baseline = std::nullopt) {
    if (recs.empty() || recs.size() != feats.size()) throw DataError("FeatureExtractor: recordings/features mismatch");
    FeatureExtractor fx;
    fx.cfg_ = cfg;
    fx.labels_ = recs.front().signal.channel_labels();
    fx.fs_ = recs.front().signal.fs();
    for (const auto& b : cfg.bands) b.validate();
    if (uses_erds(cfg.set)) {
      fx.baseline_ = baseline ? std::move(baseline)
                              : estimate_baseline(recs, feats, cfg.bands, cfg.baseline_threshold_n);
      if (fx.baseline_->channel_labels != fx.labels_ || fx.baseline_->power.cols() != static_cast<Eigen::Index>(cfg.bands.size())) {
        throw DataError("FeatureExtractor: baseline does not match channels/bands");
      }
      if ((fx.baseline_->power.array() <= 0.0).any()) throw DataError("FeatureExtractor: baseline must be positive");
    }
    if (uses_erp(cfg.set)) {
      Eigen::Index n_fit = 0;
      for (const auto& r : recs) n_fit += static_cast<Eigen::Index>(r.n_fit());
      if (n_fit < 2) throw DataError("FeatureExtractor: ERP PCA needs at least 2 fit windows");
      const Eigen::Index d = feats.front().erp.cols();
      Eigen::MatrixXd X(n_fit, d);
      Eigen::Index at = 0;
      for (std::size_t r = 0; r < recs.size(); ++r) {
        for (std::size_t i = 0; i < recs[r].windows.size(); ++i) {
          if (recs[r].fit_mask[i]) X.row(at++) = feats[r].erp.row(static_cast<Eigen::Index>(i));
        }
      }
      fx.erp_mean_ = X.colwise().mean().transpose();
      fx.erp_scale_ = ((X.rowwise() - fx.erp_mean_.transpose()).array().square().colwise().mean()).sqrt().transpose();
      for (Eigen::Index j = 0; j < d; ++j) {
        if (!(fx.erp_scale_(j) > 1e-12 * (1.0 + std::abs(fx.erp_mean_(j))))) fx.erp_scale_(j) = 1.0;
      }
      const Eigen::MatrixXd Z = (X.rowwise() - fx.erp_mean_.transpose()).array().rowwise() / fx.erp_scale_.transpose().array();
      fx.erp_pca_ = pca_fit(Z, cfg.pca_target);
    }
    return fx;
  }

  const FeatureConfig& config() const noexcept { return cfg_; }
  const std::optional<Baseline>& baseline() const noexcept { return baseline_; }
  const std::optional<PcaModel>& erp_pca() const noexcept { return erp_pca_; }
  const std::vector<std::string>& channel_labels() const noexcept { return labels_; }
  const Eigen::VectorXd& erp_mean() const noexcept { return erp_mean_; }
  const Eigen::VectorXd& erp_scale() const noexcept { return erp_scale_; }

  WindowFeatureRequest request() const {
    return {.erp = uses_erp(cfg_.set), .power = uses_power(cfg_.set), .samples = cfg_.set == FeatureSet::raw};
  }

  std::vector<std::string> feature_names(std::size_t window_len = 0) const {
    std::vector<std::string> names;
    if (cfg_.set == FeatureSet::raw) {
      for (const auto& ch : labels_)
        for (std::size_t j = 0; j < window_len; ++j) names.push_back(ch + "_s" + std::to_string(j));
      return names;
    }
    if (uses_erp(cfg_.set)) {
      for (Eigen::Index k = 0; k < erp_pca_->n_components(); ++k) names.push_back("erp_pc" + std::to_string(k + 1));
    }
    if (cfg_.set == FeatureSet::psd || cfg_.set == FeatureSet::all) {
      for (const auto& ch : labels_)
        for (const auto& b : cfg_.bands) names.push_back(ch + "_" + b.name + "_psd");
    }
    if (uses_erds(cfg_.set)) {
      for (const auto& ch : labels_)
        for (const auto& b : cfg_.bands) names.push_back(ch + "_" + b.name + "_erds");
    }
    return names;
  }

  FeatureTable transform(const WindowedRecording& rec, const WindowFeatures& f) const {
    if (rec.signal.channel_labels() != labels_) throw DataError("FeatureExtractor: channel labels differ from fit");
    const auto nw = static_cast<Eigen::Index>(rec.windows.size());
    if (nw == 0) throw DataError("build_feature_table: empty window list");
    const auto C = static_cast<Eigen::Index>(labels_.size());
    const auto B = static_cast<Eigen::Index>(cfg_.bands.size());
    const std::size_t wlen = rec.windows.front().size();
    FeatureTable t;
    t.feature_names = feature_names(wlen);
    t.values.resize(nw, static_cast<Eigen::Index>(t.feature_names.size()));
    Eigen::Index col = 0;
    if (cfg_.set == FeatureSet::raw) {
      t.values = f.samples;
      col = f.samples.cols();
    }
    if (uses_erp(cfg_.set)) {
      const Eigen::MatrixXd Z = (f.erp.rowwise() - erp_mean_.transpose()).array().rowwise() / erp_scale_.transpose().array();
      const Eigen::MatrixXd P = pca_transform(*erp_pca_, Z);
      t.values.middleCols(col, P.cols()) = P;
      col += P.cols();
    }
    if (cfg_.set == FeatureSet::psd || cfg_.set == FeatureSet::all) {
      t.values.middleCols(col, C * B) = f.power;
      col += C * B;
    }
    if (uses_erds(cfg_.set)) {
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index b = 0; b < B; ++b) {
          const double base = baseline_->power(c, b);
          t.values.col(col + c * B + b) = (100.0 / base) * (f.power.col(c * B + b).array() - base).matrix();
        }
      col += C * B;
    }
    t.window_times.resize(nw);
    const double fs = rec.signal.fs();
    for (Eigen::Index i = 0; i < nw; ++i) {
      const auto& w = rec.windows[static_cast<std::size_t>(i)];
      t.window_times(i) = rec.signal.t0() + 0.5 * static_cast<double>(w.start + w.end) / fs;
    }
    t.target = rec.target;
    t.validate();
    return t;
  }

 private:
  FeatureConfig cfg_;
  std::vector<std::string> labels_;
  double fs_ = 0.0;
  std::optional<Baseline> baseline_;
  Eigen::VectorXd erp_mean_;
  Eigen::VectorXd erp_scale_;
  std::optional<PcaModel> erp_pca_;
};

// Single-recording convenience: fit and transform on the same windows.
inline FeatureTable build_feature_table(const SignalMatrix& sig, const ForceTrace& force, const WindowSpec& spec,
                                        FeatureSet set, const std::optional<Baseline>& baseline = std::nullopt,
                                        double pca_target = 0.95,
                                        const std::vector<BandDef>& bands = default_bands()) {
  if (uses_erds(set) && !baseline) throw ConfigError("build_feature_table: ERDS features need a baseline");
  const auto rec = make_windowed(sig, force, spec);
  FeatureConfig cfg;
  cfg.set = set;
  cfg.bands = bands;
  cfg.pca_target = pca_target;
  const auto req = WindowFeatureRequest{.erp = uses_erp(set), .power = uses_power(set), .samples = set == FeatureSet::raw};
  const auto feats = window_features(rec, bands, req);
  const auto fx = FeatureExtractor::fit(std::span(&rec, 1), std::span(&feats, 1), cfg, baseline);
  return fx.transform(rec, feats);
}

}  // namespace forcedecode
