#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "forcedecode/artifact_select.hpp"
#include "forcedecode/decomposition.hpp"
#include "forcedecode/error.hpp"
#include "forcedecode/features.hpp"
#include "forcedecode/filter.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/signal.hpp"

namespace forcedecode {

// Which preprocessing stages run, in pipeline order.
struct StageFlags {
  bool filter = true;      // 0.5-50 Hz band-pass
  bool notch = true;       // mains notch
  bool clean = true;       // ICA + component labels, artifacts dropped
  bool channels = true;    // task-relevant channel subset
  bool components = true;  // ICA on the kept channels, force-covarying components kept
  bool features = true;    // off: raw window samples feed the regressor

  static StageFlags none() { return {false, false, false, false, false, false}; }
  static StageFlags all() { return {}; }

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n{"filter", "notch", "clean", "channels", "components", "features"};
    return n;
  }

  bool& operator[](const std::string& name) {
    if (name == "filter") return filter;
    if (name == "notch") return notch;
    if (name == "clean") return clean;
    if (name == "channels") return channels;
    if (name == "components") return components;
    if (name == "features") return features;
    std::string valid;
    for (const auto& s : names()) valid += (valid.empty() ? "" : ", ") + s;
    throw ConfigError("unknown stage '" + name + "' (valid: " + valid + ", all, none)");
  }

  // "all", "none" or a comma-separated list of stage names.
  static StageFlags parse(const std::string& spec) {
    if (spec == "all") return all();
    StageFlags f = none();
    if (spec == "none" || spec.empty()) return f;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) f[item] = true;
    return f;
  }

  std::string to_string() const {
    std::string s;
    const bool v[] = {filter, notch, clean, channels, components, features};
    for (std::size_t i = 0; i < names().size(); ++i)
      if (v[i]) s += (s.empty() ? "" : ",") + names()[i];
    return s.empty() ? "none" : s;
  }
};

struct PipelineConfig {
  StageFlags stages;
  double band_low_hz = 0.5;
  double band_high_hz = 50.0;
  int filter_order = 4;
  double line_hz = 50.0;
  double notch_q = 30.0;
  LabelerConfig labeler;
  SelectionConfig selection;
  std::uint64_t seed = 0;
  int ica_max_iter = 500;
  double ica_tol = 1e-5;
  std::size_t ica_max_samples = 10000;  // fit on a strided subset above this
  WindowSpec window;
  double edge_s = 1.0;  // windows this close to either trial edge are dropped
  ForceAggregation aggregation = ForceAggregation::mean;
  FeatureConfig features;

  void validate() const {
    window.validate();
    if (!(edge_s >= 0.0)) throw ConfigError("PipelineConfig: edge_s must be non-negative");
    if (!(band_low_hz >= 0.0 && band_high_hz > band_low_hz)) throw ConfigError("PipelineConfig: invalid band edges");
    if (filter_order < 1 || filter_order > 12) throw ConfigError("PipelineConfig: filter_order must be in [1, 12]");
    if (!(line_hz > 0.0) || !(notch_q > 0.0)) throw ConfigError("PipelineConfig: line_hz and notch_q must be positive");
    if (ica_max_iter < 1 || !(ica_tol > 0.0)) throw ConfigError("PipelineConfig: invalid ICA settings");
    if (selection.top_components == 0) throw ConfigError("PipelineConfig: top_components must be positive");
    if (!(features.pca_target > 0.0 && features.pca_target <= 1.0)) throw ConfigError("PipelineConfig: pca_target must be in (0, 1]");
    for (const auto& b : features.bands) b.validate();
  }
};

enum class Split : std::uint8_t { train, validation, test, excluded };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::excluded: return "excluded";
  }
  return "?";
}

// Per-trial, per-window split labels.
using SplitAssignment = std::vector<std::vector<Split>>;

// Windows of a trial after edge exclusion.
inline std::vector<Window> analysis_windows(std::size_t n_samples, double fs, const PipelineConfig& cfg) {
  auto w = sliding_windows(n_samples, fs, cfg.window);
  if (cfg.edge_s > 0.0) w = interior_windows(w, n_samples, fs, cfg.edge_s);
  if (w.empty()) throw DataError("trial too short: no windows left after excluding " + std::to_string(cfg.edge_s) + " s edges");
  return w;
}

namespace detail {

inline WindowedRecording windowed(const SignalMatrix& sig, const ForceTrace& force, const PipelineConfig& cfg,
                                  const std::vector<Split>* split) {
  auto windows = analysis_windows(sig.n_samples(), sig.fs(), cfg);
  auto target = align_force(force, windows, sig.n_samples(), cfg.aggregation);
  std::vector<bool> mask(windows.size(), true);
  if (split) {
    if (split->size() != windows.size()) throw DataError("split assignment does not match the window count");
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (*split)[i] == Split::train;
  }
  return {sig, std::move(windows), std::move(target), std::move(mask)};
}

// Channel-wise concatenation of the recordings. Above max_samples, every
// k-th one-second chunk is kept so spectra are not aliased.
inline SignalMatrix concat_for_fit(const std::vector<const SignalMatrix*>& sigs, std::size_t max_samples) {
  std::size_t total = 0;
  for (const auto* s : sigs) total += s->n_samples();
  const auto chunk = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(sigs.front()->fs())));
  const std::size_t stride = max_samples > 0 && total > max_samples ? (total + max_samples - 1) / max_samples : 1;
  auto kept = [&](std::size_t j) { return (j / chunk) % stride == 0; };
  std::size_t cols = 0;
  for (const auto* s : sigs)
    for (std::size_t j = 0; j < s->n_samples(); ++j) cols += kept(j);
  const auto C = static_cast<Eigen::Index>(sigs.front()->n_channels());
  Eigen::MatrixXd X(C, static_cast<Eigen::Index>(cols));
  Eigen::Index at = 0;
  for (const auto* s : sigs) {
    if (s->channel_labels() != sigs.front()->channel_labels()) throw DataError("recordings have different channel labels");
    for (std::size_t j = 0; j < s->n_samples(); ++j)
      if (kept(j)) X.col(at++) = s->data().col(static_cast<Eigen::Index>(j));
  }
  return SignalMatrix(std::move(X), sigs.front()->fs(), sigs.front()->channel_labels());
}

// Numerical rank of the channel covariance.
inline Eigen::Index covariance_rank(const SignalMatrix& sig) {
  const Eigen::MatrixXd C = sig.data().colwise() - sig.data().rowwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C * C.transpose(), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-9 * top) ++r;
  return r;
}

}  // namespace detail

// Preprocessing + feature state fit on training windows, applicable to any
// trial recorded on the same montage.
struct FittedPipeline {
  PipelineConfig config;
  std::vector<std::string> input_labels;
  double fs = 0.0;
  std::optional<SosFilter> band;
  std::optional<SosFilter> notch;
  std::optional<Decomposition> cleaning;  // sources dropped, spatial model only
  std::vector<ComponentLabel> component_labels;
  std::vector<std::size_t> kept_components;
  SelectionReport channel_report;
  std::optional<Decomposition> task;
  SelectionReport component_report;
  std::optional<FeatureExtractor> extractor;

  SignalMatrix filtered(const SignalMatrix& sig) const {
    SignalMatrix out = sig;
    if (band) out = band->filtfilt(out);
    if (notch) out = notch->filtfilt(out);
    return out;
  }

  SignalMatrix cleaned(const SignalMatrix& filtered_sig) const {
    if (!cleaning) return filtered_sig;
    return reconstruct(cleaning->apply(filtered_sig), kept_components);
  }

  SignalMatrix task_signal(const SignalMatrix& cleaned_sig) const {
    SignalMatrix s = config.stages.channels ? cleaned_sig.select(channel_report.chosen_channels) : cleaned_sig;
    if (!task) return s;
    return reconstruct(task->apply(s), component_report.chosen_components);
  }

  SignalMatrix preprocess(const SignalMatrix& sig) const {
    check_input(sig);
    return task_signal(cleaned(filtered(sig)));
  }

  // Feature table over every analysis window of a trial.
  FeatureTable transform(const Trial& trial) const {
    const auto rec = detail::windowed(preprocess(trial.signal), trial.force, config, nullptr);
    const auto feats = window_features(rec, extractor->config().bands, extractor->request(), extractor->config().nfft);
    return extractor->transform(rec, feats);
  }

  void check_input(const SignalMatrix& sig) const {
    if (sig.channel_labels() != input_labels) throw DataError("pipeline: trial channel labels differ from the fitted montage");
    if (sig.fs() != fs) throw DataError("pipeline: trial sampling rate differs from the fitted one");
  }
};

struct PipelineResult {
  FittedPipeline pipeline;
  std::vector<FeatureTable> tables;  // one per trial, every analysis window
};

// Fits every enabled stage using only windows marked train (force-dependent
// stages) or trials that contain any train window (unsupervised stages), then
// transforms all trials.
inline PipelineResult fit_pipeline(const TrialSet& trials, const SplitAssignment& split, const PipelineConfig& cfg) {
  cfg.validate();
  if (trials.empty()) throw DataError("fit_pipeline: no trials");
  if (split.size() != trials.size()) throw DataError("fit_pipeline: split assignment does not cover every trial");
  PipelineResult res;
  FittedPipeline& p = res.pipeline;
  p.config = cfg;
  p.input_labels = trials.front().signal.channel_labels();
  p.fs = trials.front().signal.fs();
  for (const auto& t : trials) p.check_input(t.signal);

  const double nyq = p.fs / 2.0;
  if (cfg.stages.filter) {
    if (!(cfg.band_high_hz < nyq)) throw ConfigError("band filter: high edge must be below fs/2");
    p.band = butterworth_bandpass(cfg.filter_order, cfg.band_low_hz, cfg.band_high_hz, p.fs);
  }
  if (cfg.stages.notch) {
    if (!(cfg.line_hz < nyq)) throw ConfigError("notch: line frequency must be below fs/2");
    p.notch = iir_notch(cfg.line_hz, cfg.notch_q, p.fs);
  }

  std::vector<bool> fit_trial(trials.size(), false);
  for (std::size_t i = 0; i < trials.size(); ++i)
    fit_trial[i] = std::find(split[i].begin(), split[i].end(), Split::train) != split[i].end();
  if (std::find(fit_trial.begin(), fit_trial.end(), true) == fit_trial.end()) throw DataError("fit_pipeline: no training windows");

  std::vector<SignalMatrix> sigs;
  sigs.reserve(trials.size());
  for (const auto& t : trials) sigs.push_back(p.filtered(t.signal));

  auto fit_signals = [&]() {
    std::vector<const SignalMatrix*> v;
    for (std::size_t i = 0; i < sigs.size(); ++i)
      if (fit_trial[i]) v.push_back(&sigs[i]);
    return v;
  };

  if (cfg.stages.clean) {
    const auto fit_sig = detail::concat_for_fit(fit_signals(), cfg.ica_max_samples);
    IcaOptions opt;
    opt.seed = Rng::derive(cfg.seed, 101);
    opt.max_iter = cfg.ica_max_iter;
    opt.tol = cfg.ica_tol;
    opt.n_components = detail::covariance_rank(fit_sig);
    Decomposition dec = fastica(fit_sig, opt);
    p.component_labels = label_components(dec, cfg.labeler);
    p.kept_components = brain_components(p.component_labels);
    if (p.kept_components.empty()) {
      // Same diagnostic as remove_artifacts.
      (void)remove_artifacts(dec, p.component_labels);
    }
    dec.sources.resize(0, 0);
    p.cleaning = std::move(dec);
    for (auto& s : sigs) s = p.cleaned(s);
  }

  std::vector<WindowedRecording> recs;
  auto rebuild_recs = [&]() {
    recs.clear();
    for (std::size_t i = 0; i < trials.size(); ++i)
      if (fit_trial[i]) recs.push_back(detail::windowed(sigs[i], trials[i].force, cfg, &split[i]));
  };

  if (cfg.stages.channels) {
    rebuild_recs();
    p.channel_report = rank_channels_by_force_cov(recs, cfg.selection);
    for (auto& s : sigs) s = s.select(p.channel_report.chosen_channels);
  }

  if (cfg.stages.components) {
    const auto fit_sig = detail::concat_for_fit(fit_signals(), cfg.ica_max_samples);
    IcaOptions opt;
    opt.seed = Rng::derive(cfg.seed, 202);
    opt.max_iter = cfg.ica_max_iter;
    opt.tol = cfg.ica_tol;
    opt.n_components = detail::covariance_rank(fit_sig);
    Decomposition dec = fastica(fit_sig, opt);
    dec.sources.resize(0, 0);
    rebuild_recs();
    std::vector<Decomposition> decs;
    for (const auto& r : recs) decs.push_back(dec.apply(r.signal));
    const auto k = std::min<std::size_t>(cfg.selection.top_components, static_cast<std::size_t>(dec.n_components()));
    p.component_report = rank_components_by_force_cov(decs, recs, k, cfg.selection.bands);
    p.task = std::move(dec);
    for (auto& s : sigs) s = reconstruct(p.task->apply(s), p.component_report.chosen_components);
  }

  FeatureConfig fcfg = cfg.features;
  if (!cfg.stages.features) fcfg.set = FeatureSet::raw;
  rebuild_recs();
  const auto req = WindowFeatureRequest{.erp = uses_erp(fcfg.set), .power = uses_power(fcfg.set), .samples = fcfg.set == FeatureSet::raw};
  std::vector<WindowedRecording> all_recs;
  std::vector<WindowFeatures> all_feats;
  std::vector<WindowFeatures> fit_feats;
  std::vector<WindowedRecording> fit_recs;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    all_recs.push_back(detail::windowed(sigs[i], trials[i].force, cfg, &split[i]));
    all_feats.push_back(window_features(all_recs.back(), fcfg.bands, req, fcfg.nfft));
    if (fit_trial[i]) {
      fit_recs.push_back(all_recs.back());
      fit_feats.push_back(all_feats.back());
    }
  }
  p.extractor = FeatureExtractor::fit(fit_recs, fit_feats, fcfg);
  for (std::size_t i = 0; i < trials.size(); ++i) res.tables.push_back(p.extractor->transform(all_recs[i], all_feats[i]));
  return res;
}

// Rows of the per-trial tables carrying the requested split label.
inline FeatureTable gather_rows(const std::vector<FeatureTable>& tables, const SplitAssignment& split, Split which) {
  std::vector<FeatureTable> parts;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    std::vector<Eigen::Index> idx;
    for (std::size_t j = 0; j < split[i].size(); ++j)
      if (split[i][j] == which) idx.push_back(static_cast<Eigen::Index>(j));
    if (!idx.empty()) parts.push_back(tables[i].rows(idx));
  }
  if (parts.empty()) {
    FeatureTable empty;
    empty.feature_names = tables.front().feature_names;
    empty.values.resize(0, static_cast<Eigen::Index>(empty.feature_names.size()));
    return empty;
  }
  return FeatureTable::concat_rows(parts);
}

}  // namespace forcedecode
