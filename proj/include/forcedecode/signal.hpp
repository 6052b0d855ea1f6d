#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "forcedecode/error.hpp"

namespace forcedecode {

// Multichannel recording, channels in rows. Invariants are checked on
// construction: labels match rows and are unique, fs > 0, at least one
// sample, every value finite.
class SignalMatrix {
 public:
  SignalMatrix(Eigen::MatrixXd data, double fs, std::vector<std::string> channel_labels,
               double t0 = 0.0)
      : data_(std::move(data)), fs_(fs), labels_(std::move(channel_labels)), t0_(t0) {
    if (!(fs_ > 0.0) || !std::isfinite(fs_)) {
      throw ConfigError("SignalMatrix: sampling rate must be positive, got " + std::to_string(fs_));
    }
    if (data_.cols() < 1) throw DataError("SignalMatrix: at least one sample is required");
    if (static_cast<std::size_t>(data_.rows()) != labels_.size()) {
      throw DataError("SignalMatrix: " + std::to_string(data_.rows()) + " channels but " +
                      std::to_string(labels_.size()) + " labels");
    }
    std::unordered_set<std::string> seen;
    for (const auto& l : labels_) {
      if (!seen.insert(l).second) throw DataError("SignalMatrix: duplicate channel label '" + l + "'");
    }
    if (!data_.allFinite()) throw NumericalError("SignalMatrix: data contains NaN or Inf");
  }

  const Eigen::MatrixXd& data() const noexcept { return data_; }
  double fs() const noexcept { return fs_; }
  double t0() const noexcept { return t0_; }
  const std::vector<std::string>& channel_labels() const noexcept { return labels_; }
  std::size_t n_channels() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t n_samples() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  double duration_s() const noexcept { return static_cast<double>(n_samples()) / fs_; }

  std::optional<std::size_t> channel_index(const std::string& label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }

  // Same clock and labels, new samples.
  SignalMatrix with_data(Eigen::MatrixXd data) const {
    return SignalMatrix(std::move(data), fs_, labels_, t0_);
  }

  // Channels in the order given. Unknown labels are an error.
  SignalMatrix select(const std::vector<std::string>& labels) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(labels.size()), data_.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto idx = channel_index(labels[i]);
      if (!idx) throw DataError("SignalMatrix: no channel labelled '" + labels[i] + "'");
      out.row(static_cast<Eigen::Index>(i)) = data_.row(static_cast<Eigen::Index>(*idx));
    }
    return SignalMatrix(std::move(out), fs_, labels, t0_);
  }

 private:
  Eigen::MatrixXd data_;
  double fs_;
  std::vector<std::string> labels_;
  double t0_;
};

// Total grasp force in newtons on the same sample clock as the EEG.
struct ForceTrace {
  Eigen::VectorXd values;
  double fs = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }

  // Sensor noise can dip below zero; clamping is opt-in.
  ForceTrace clamped_nonnegative() const { return {values.cwiseMax(0.0), fs}; }
};

struct WindowSpec {
  double width_s = 0.1;
  double step_s = 0.05;

  void validate() const {
    if (!(width_s > 0.0) || !(step_s > 0.0) || step_s > width_s) {
      throw ConfigError("WindowSpec: require 0 < step_s <= width_s (got width " +
                        std::to_string(width_s) + ", step " + std::to_string(step_s) + ")");
    }
  }
};

// Half-open sample range [start, end).
struct Window {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - start; }
  bool operator==(const Window&) const = default;
};

inline std::size_t window_width_samples(double fs, const WindowSpec& spec) {
  return static_cast<std::size_t>(std::llround(spec.width_s * fs));
}

// Windows of w = round(width*fs) samples every s = round(step*fs) samples.
// The trailing partial window is dropped.
inline std::vector<Window> sliding_windows(std::size_t n_samples, double fs, const WindowSpec& spec) {
  spec.validate();
  if (!(fs > 0.0)) throw ConfigError("sliding_windows: fs must be positive");
  const auto w = window_width_samples(fs, spec);
  const auto s = static_cast<std::size_t>(std::llround(spec.step_s * fs));
  if (w == 0 || s == 0) throw ConfigError("sliding_windows: window or step rounds to zero samples");
  if (n_samples < w) {
    throw DataError("sliding_windows: signal of " + std::to_string(n_samples) +
                    " samples is shorter than one window (" + std::to_string(w) + ")");
  }
  const std::size_t count = (n_samples - w) / s + 1;
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({i * s, i * s + w});
  return out;
}

// Drops windows that touch the first or last `edge_s` seconds of a record,
// where forward-backward filtering leaves transients.
inline std::vector<Window> interior_windows(std::span<const Window> windows, std::size_t n_samples,
                                            double fs, double edge_s) {
  const auto edge = static_cast<std::size_t>(std::llround(std::max(0.0, edge_s) * fs));
  std::vector<Window> out;
  for (const auto& w : windows) {
    if (w.start >= edge && w.end + edge <= n_samples) out.push_back(w);
  }
  return out;
}

enum class ForceAggregation { mean, last_sample };

// One force target per window.
inline Eigen::VectorXd align_force(const ForceTrace& force, std::span<const Window> windows,
                                   std::size_t n_signal_samples,
                                   ForceAggregation agg = ForceAggregation::mean) {
  if (force.size() != n_signal_samples) {
    throw DataError("align_force: force trace has " + std::to_string(force.size()) +
                    " samples but the signal has " + std::to_string(n_signal_samples));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (w.end > force.size() || w.size() == 0) throw DataError("align_force: window outside the force trace");
    const auto seg = force.values.segment(static_cast<Eigen::Index>(w.start), static_cast<Eigen::Index>(w.size()));
    out(static_cast<Eigen::Index>(i)) = agg == ForceAggregation::mean ? seg.mean() : seg(seg.size() - 1);
  }
  return out;
}

// One grasp-and-lift recording with its force and condition metadata.
struct Trial {
  std::string subject_id;
  std::string trial_id;
  double weight_g = 0.0;
  SignalMatrix signal;
  ForceTrace force;
};

using TrialSet = std::vector<Trial>;

// A recording cut into analysis windows with one force target per window.
// `fit_mask[i]` marks windows whose target may be used when fitting anything
// (selection, baselines, models); the rest are held out.
struct WindowedRecording {
  SignalMatrix signal;
  std::vector<Window> windows;
  Eigen::VectorXd target;
  std::vector<bool> fit_mask;

  std::size_t n_fit() const {
    return static_cast<std::size_t>(std::count(fit_mask.begin(), fit_mask.end(), true));
  }
};

inline WindowedRecording make_windowed(const SignalMatrix& sig, const ForceTrace& force, const WindowSpec& spec,
                                       double edge_s = 0.0, ForceAggregation agg = ForceAggregation::mean) {
  auto windows = sliding_windows(sig.n_samples(), sig.fs(), spec);
  if (edge_s > 0.0) windows = interior_windows(windows, sig.n_samples(), sig.fs(), edge_s);
  if (windows.empty()) throw DataError("make_windowed: no windows left after edge exclusion");
  auto target = align_force(force, windows, sig.n_samples(), agg);
  std::vector<bool> mask(windows.size(), true);
  return {sig, std::move(windows), std::move(target), std::move(mask)};
}

}  // namespace forcedecode
