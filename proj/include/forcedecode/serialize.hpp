#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "forcedecode/data_io.hpp"
#include "forcedecode/error.hpp"
#include "forcedecode/pipeline.hpp"
#include "forcedecode/protocol.hpp"
#include "forcedecode/regressors.hpp"

namespace forcedecode {

using ojson = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

// FNV-1a, 64 bit, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

inline ojson matrix_to_json(const Eigen::MatrixXd& m) {
  ojson j;
  j["shape"] = {m.rows(), m.cols()};
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  j["data"] = flat;
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<std::size_t>(shape[0] * shape[1]) != flat.size()) {
    throw DataError("matrix: shape does not match data length");
  }
  Eigen::MatrixXd m(shape[0], shape[1]);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < shape[0]; ++r)
    for (Eigen::Index c = 0; c < shape[1]; ++c) m(r, c) = flat[at++];
  return m;
}

inline ojson vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---------------------------------------------------------------------------
// Config reading: present keys override defaults, unknown keys are errors.
// ---------------------------------------------------------------------------

class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  template <class T, class Conv>
  void get_as(const char* key, T& out, Conv conv) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    out = conv(s);
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ojson to_json(const BandDef& b) { return {{"name", b.name}, {"lo_hz", b.lo_hz}, {"hi_hz", b.hi_hz}}; }

inline BandDef band_from_json(const nlohmann::json& j, const std::string& path) {
  BandDef b;
  ObjectReader r(j, path);
  r.get("name", b.name);
  r.get("lo_hz", b.lo_hz);
  r.get("hi_hz", b.hi_hz);
  r.finish();
  b.validate();
  return b;
}

inline ojson bands_to_json(const std::vector<BandDef>& bands) {
  ojson a = ojson::array();
  for (const auto& b : bands) a.push_back(to_json(b));
  return a;
}

inline std::vector<BandDef> bands_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of bands");
  std::vector<BandDef> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(band_from_json(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline ojson to_json(const WindowSpec& w) { return {{"width_s", w.width_s}, {"step_s", w.step_s}}; }

inline void read_into(const nlohmann::json& j, const std::string& path, WindowSpec& w) {
  ObjectReader r(j, path);
  r.get("width_s", w.width_s);
  r.get("step_s", w.step_s);
  r.finish();
}

inline ojson to_json(const LabelerConfig& c) {
  ojson j;
  j["mains_hz"] = c.mains_hz;
  j["line_halfwidth_hz"] = c.line_halfwidth_hz;
  j["line_fraction"] = c.line_fraction;
  j["delta"] = to_json(c.delta);
  j["eye_delta_fraction"] = c.eye_delta_fraction;
  j["eye_frontal_mass"] = c.eye_frontal_mass;
  j["frontal_labels"] = c.frontal_labels;
  j["muscle_hf_hz"] = c.muscle_hf_hz;
  j["muscle_fraction"] = c.muscle_fraction;
  j["heart_min_period_s"] = c.heart_min_period_s;
  j["heart_max_period_s"] = c.heart_max_period_s;
  j["heart_prominence"] = c.heart_prominence;
  j["spectrum_segment_s"] = c.spectrum_segment_s;
  j["max_analysis_s"] = c.max_analysis_s;
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, LabelerConfig& c) {
  ObjectReader r(j, path);
  r.get("mains_hz", c.mains_hz);
  r.get("line_halfwidth_hz", c.line_halfwidth_hz);
  r.get("line_fraction", c.line_fraction);
  if (const auto* d = r.sub("delta")) c.delta = band_from_json(*d, r.path("delta"));
  r.get("eye_delta_fraction", c.eye_delta_fraction);
  r.get("eye_frontal_mass", c.eye_frontal_mass);
  r.get("frontal_labels", c.frontal_labels);
  r.get("muscle_hf_hz", c.muscle_hf_hz);
  r.get("muscle_fraction", c.muscle_fraction);
  r.get("heart_min_period_s", c.heart_min_period_s);
  r.get("heart_max_period_s", c.heart_max_period_s);
  r.get("heart_prominence", c.heart_prominence);
  r.get("spectrum_segment_s", c.spectrum_segment_s);
  r.get("max_analysis_s", c.max_analysis_s);
  r.finish();
}

inline ojson to_json(const SelectionConfig& c) {
  ojson j;
  j["channel_policy"] = c.channel_policy == ChannelPolicy::fixed_list ? "fixed_list" : "ranked";
  j["fixed_channels"] = c.fixed_channels;
  j["top_channels"] = c.top_channels;
  j["top_components"] = c.top_components;
  j["bands"] = bands_to_json(c.bands);
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, SelectionConfig& c) {
  ObjectReader r(j, path);
  r.get_as("channel_policy", c.channel_policy, [](const std::string& s) {
    if (s == "fixed_list") return ChannelPolicy::fixed_list;
    if (s == "ranked") return ChannelPolicy::ranked;
    throw ConfigError("unknown channel_policy '" + s + "' (valid: fixed_list, ranked)");
  });
  r.get("fixed_channels", c.fixed_channels);
  r.get("top_channels", c.top_channels);
  r.get("top_components", c.top_components);
  if (const auto* b = r.sub("bands")) c.bands = bands_from_json(*b, r.path("bands"));
  r.finish();
}

inline ojson to_json(const FeatureConfig& c) {
  return {{"set", to_string(c.set)},
          {"bands", bands_to_json(c.bands)},
          {"pca_target", c.pca_target},
          {"baseline_threshold_n", c.baseline_threshold_n},
          {"nfft", c.nfft}};
}

inline void read_into(const nlohmann::json& j, const std::string& path, FeatureConfig& c) {
  ObjectReader r(j, path);
  r.get_as("set", c.set, feature_set_from_string);
  if (const auto* b = r.sub("bands")) c.bands = bands_from_json(*b, r.path("bands"));
  r.get("pca_target", c.pca_target);
  r.get("baseline_threshold_n", c.baseline_threshold_n);
  r.get("nfft", c.nfft);
  r.finish();
}

inline ojson to_json(const PipelineConfig& c) {
  ojson j;
  j["stages"] = c.stages.to_string();
  j["band_low_hz"] = c.band_low_hz;
  j["band_high_hz"] = c.band_high_hz;
  j["filter_order"] = c.filter_order;
  j["line_hz"] = c.line_hz;
  j["notch_q"] = c.notch_q;
  j["labeler"] = to_json(c.labeler);
  j["selection"] = to_json(c.selection);
  j["seed"] = c.seed;
  j["ica_max_iter"] = c.ica_max_iter;
  j["ica_tol"] = c.ica_tol;
  j["ica_max_samples"] = c.ica_max_samples;
  j["window"] = to_json(c.window);
  j["edge_s"] = c.edge_s;
  j["aggregation"] = c.aggregation == ForceAggregation::mean ? "mean" : "last_sample";
  j["features"] = to_json(c.features);
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, PipelineConfig& c) {
  ObjectReader r(j, path);
  r.get_as("stages", c.stages, StageFlags::parse);
  r.get("band_low_hz", c.band_low_hz);
  r.get("band_high_hz", c.band_high_hz);
  r.get("filter_order", c.filter_order);
  r.get("line_hz", c.line_hz);
  r.get("notch_q", c.notch_q);
  if (const auto* s = r.sub("labeler")) read_into(*s, r.path("labeler"), c.labeler);
  if (const auto* s = r.sub("selection")) read_into(*s, r.path("selection"), c.selection);
  r.get("seed", c.seed);
  r.get("ica_max_iter", c.ica_max_iter);
  r.get("ica_tol", c.ica_tol);
  r.get("ica_max_samples", c.ica_max_samples);
  if (const auto* s = r.sub("window")) read_into(*s, r.path("window"), c.window);
  r.get("edge_s", c.edge_s);
  r.get_as("aggregation", c.aggregation, [](const std::string& s) {
    if (s == "mean") return ForceAggregation::mean;
    if (s == "last_sample") return ForceAggregation::last_sample;
    throw ConfigError("unknown aggregation '" + s + "' (valid: mean, last_sample)");
  });
  if (const auto* s = r.sub("features")) read_into(*s, r.path("features"), c.features);
  r.finish();
}

inline ojson to_json(const FitConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["ridge"] = c.ridge;
  j["hidden"] = c.hidden;
  j["activation"] = to_string(c.activation);
  j["restore_best"] = c.restore_best;
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, FitConfig& c) {
  ObjectReader r(j, path);
  r.get("seed", c.seed);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("epsilon", c.epsilon);
  r.get("ridge", c.ridge);
  r.get("hidden", c.hidden);
  r.get_as("activation", c.activation, activation_from_string);
  r.get("restore_best", c.restore_best);
  r.finish();
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig c;
  read_into(j, "fit", c);
  return c;
}

inline ojson to_json(const SplitPlan& p) {
  ojson j;
  j["mode"] = to_string(p.mode);
  j["unit"] = to_string(p.unit);
  j["train"] = p.train;
  j["test"] = p.test;
  j["validation"] = p.validation;
  j["block_s"] = p.block_s;
  j["purge_s"] = p.purge_s;
  j["seed"] = p.seed;
  j["held_out_subject"] = p.held_out_subject ? ojson(*p.held_out_subject) : ojson(nullptr);
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, SplitPlan& p) {
  ObjectReader r(j, path);
  r.get_as("mode", p.mode, protocol_mode_from_string);
  r.get_as("unit", p.unit, split_unit_from_string);
  r.get("train", p.train);
  r.get("test", p.test);
  r.get("validation", p.validation);
  r.get("block_s", p.block_s);
  r.get("purge_s", p.purge_s);
  r.get("seed", p.seed);
  if (const auto* h = r.sub("held_out_subject")) {
    if (h->is_null()) p.held_out_subject.reset();
    else if (h->is_string()) p.held_out_subject = h->get<std::string>();
    else throw ConfigError(r.path("held_out_subject") + ": expected a string or null");
  }
  r.finish();
}

inline ojson to_json(const ProtocolConfig& c) {
  ojson j;
  j["pipeline"] = to_json(c.pipeline);
  j["fit"] = to_json(c.fit);
  j["linear_ridge"] = c.linear_ridge;
  std::vector<std::string> models;
  for (auto k : c.models) models.push_back(to_string(k));
  j["models"] = models;
  j["model_inputs"] = c.model_inputs;
  j["pls_max_components"] = c.pls_max_components;
  j["pls_folds"] = c.pls_folds;
  j["plan"] = to_json(c.plan);
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, ProtocolConfig& c) {
  ObjectReader r(j, path);
  if (const auto* s = r.sub("pipeline")) read_into(*s, r.path("pipeline"), c.pipeline);
  if (const auto* s = r.sub("fit")) read_into(*s, r.path("fit"), c.fit);
  r.get("linear_ridge", c.linear_ridge);
  if (const auto* s = r.sub("models")) {
    c.models.clear();
    try {
      for (const auto& m : s->get<std::vector<std::string>>()) c.models.push_back(model_kind_from_string(m));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(r.path("models") + ": " + e.what());
    }
  }
  if (const auto* s = r.sub("model_inputs")) {
    ObjectReader mi(*s, r.path("model_inputs"));
    for (auto k : all_model_kinds()) mi.get(to_string(k).c_str(), c.model_inputs[to_string(k)]);
    mi.finish();
  }
  r.get("pls_max_components", c.pls_max_components);
  r.get("pls_folds", c.pls_folds);
  if (const auto* s = r.sub("plan")) read_into(*s, r.path("plan"), c.plan);
  r.finish();
}

inline ojson to_json(const SynthConfig& c) {
  ojson j;
  j["n_subjects"] = c.n_subjects;
  j["trials_per_subject"] = c.trials_per_subject;
  j["fs"] = c.fs;
  j["duration_s"] = c.duration_s;
  j["coupled_channels"] = c.coupled_channels;
  j["coupling"] = c.coupling;
  j["noise_floor"] = c.noise_floor;
  j["seed"] = c.seed;
  j["mains_hz"] = c.mains_hz;
  j["montage"] = c.montage;
  j["weights_g"] = c.weights_g;
  j["mu_amplitude"] = c.mu_amplitude;
  j["mu_leak"] = c.mu_leak;
  j["alpha_amplitude"] = c.alpha_amplitude;
  j["theta_amplitude"] = c.theta_amplitude;
  j["background_sd"] = c.background_sd;
  j["mains_amplitude"] = c.mains_amplitude;
  j["blink_amplitude"] = c.blink_amplitude;
  j["erd_depth"] = c.erd_depth;
  j["erd_saturation_n"] = c.erd_saturation_n;
  j["window"] = to_json(c.window);
  return j;
}

inline void read_into(const nlohmann::json& j, const std::string& path, SynthConfig& c) {
  ObjectReader r(j, path);
  r.get("n_subjects", c.n_subjects);
  r.get("trials_per_subject", c.trials_per_subject);
  r.get("fs", c.fs);
  r.get("duration_s", c.duration_s);
  r.get("coupled_channels", c.coupled_channels);
  r.get("coupling", c.coupling);
  r.get("noise_floor", c.noise_floor);
  r.get("seed", c.seed);
  r.get("mains_hz", c.mains_hz);
  r.get("montage", c.montage);
  r.get("weights_g", c.weights_g);
  r.get("mu_amplitude", c.mu_amplitude);
  r.get("mu_leak", c.mu_leak);
  r.get("alpha_amplitude", c.alpha_amplitude);
  r.get("theta_amplitude", c.theta_amplitude);
  r.get("background_sd", c.background_sd);
  r.get("mains_amplitude", c.mains_amplitude);
  r.get("blink_amplitude", c.blink_amplitude);
  r.get("erd_depth", c.erd_depth);
  r.get("erd_saturation_n", c.erd_saturation_n);
  if (const auto* s = r.sub("window")) read_into(*s, r.path("window"), c.window);
  r.finish();
}

// The whole run in one file.
struct RunConfig {
  SynthConfig synth;
  ProtocolConfig protocol;
  std::string model = "nnr";
  std::string payload = "bin";

  void validate() const {
    synth.validate();
    protocol.validate();
    (void)model_kind_from_string(model);
    (void)payload_format_from_string(payload);
  }
};

inline ojson to_json(const RunConfig& c) {
  ojson j;
  j["synth"] = to_json(c.synth);
  j["protocol"] = to_json(c.protocol);
  j["model"] = c.model;
  j["payload"] = c.payload;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  ObjectReader r(j, "config");
  if (const auto* s = r.sub("synth")) read_into(*s, r.path("synth"), c.synth);
  if (const auto* s = r.sub("protocol")) read_into(*s, r.path("protocol"), c.protocol);
  r.get("model", c.model);
  r.get("payload", c.payload);
  r.finish();
  c.validate();
  return c;
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Fitted state
// ---------------------------------------------------------------------------

inline ojson to_json(const PcaModel& m) {
  return {{"components", matrix_to_json(m.components)},
          {"explained_variance", vector_to_json(m.explained_variance)},
          {"explained_variance_ratio", vector_to_json(m.explained_variance_ratio)},
          {"mean", vector_to_json(m.mean)}};
}

inline PcaModel pca_from_json(const nlohmann::json& j) {
  PcaModel m;
  m.components = matrix_from_json(j.at("components"));
  m.explained_variance = vector_from_json(j.at("explained_variance"));
  m.explained_variance_ratio = vector_from_json(j.at("explained_variance_ratio"));
  m.mean = vector_from_json(j.at("mean"));
  return m;
}

// Spatial model only; sources are data, not parameters.
inline ojson to_json(const Decomposition& d) {
  return {{"mixing", matrix_to_json(d.mixing)},
          {"unmixing", matrix_to_json(d.unmixing)},
          {"mean", vector_to_json(d.mean)},
          {"fs", d.fs},
          {"channel_labels", d.channel_labels},
          {"converged", d.converged},
          {"iterations", d.iterations}};
}

inline Decomposition decomposition_from_json(const nlohmann::json& j) {
  Decomposition d;
  d.mixing = matrix_from_json(j.at("mixing"));
  d.unmixing = matrix_from_json(j.at("unmixing"));
  d.mean = vector_from_json(j.at("mean"));
  d.fs = j.at("fs").get<double>();
  d.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
  d.converged = j.value("converged", false);
  d.iterations = j.value("iterations", 0);
  return d;
}

inline ojson to_json(const SelectionReport& r) {
  ojson j;
  j["channel_labels"] = r.channel_labels;
  j["channel_covariance"] = vector_to_json(r.channel_covariance);
  j["component_covariance"] = vector_to_json(r.component_covariance);
  j["chosen_channels"] = r.chosen_channels;
  j["chosen_components"] = r.chosen_components;
  j["channel_policy"] = r.channel_policy;
  j["top_channels"] = r.top_channels;
  j["top_components"] = r.top_components;
  j["n_windows"] = r.n_windows;
  return j;
}

inline ojson to_json(const ComponentLabel& l) {
  ojson j;
  j["kind"] = to_string(l.kind);
  j["confidence"] = l.confidence;
  j["evidence"] = l.evidence;
  return j;
}

inline ojson to_json(const FittedPipeline& p) {
  ojson j;
  j["config"] = to_json(p.config);
  j["input_labels"] = p.input_labels;
  j["fs"] = p.fs;
  if (p.cleaning) {
    j["cleaning"] = to_json(*p.cleaning);
    ojson labels = ojson::array();
    for (const auto& l : p.component_labels) labels.push_back(to_json(l));
    j["component_labels"] = labels;
    j["kept_components"] = p.kept_components;
  }
  if (p.config.stages.channels) j["channel_selection"] = to_json(p.channel_report);
  if (p.task) {
    j["task_decomposition"] = to_json(*p.task);
    j["component_selection"] = to_json(p.component_report);
  }
  if (p.extractor) {
    ojson f;
    f["config"] = to_json(p.extractor->config());
    if (const auto& b = p.extractor->baseline()) {
      f["baseline"] = {{"power", matrix_to_json(b->power)}, {"n_windows_used", b->n_windows_used},
                       {"force_threshold_n", b->force_threshold_n}};
    }
    if (const auto& pca = p.extractor->erp_pca()) {
      f["erp_mean"] = vector_to_json(p.extractor->erp_mean());
      f["erp_scale"] = vector_to_json(p.extractor->erp_scale());
      f["erp_pca"] = to_json(*pca);
    }
    j["features"] = f;
  }
  return j;
}

inline ojson to_json(const RegressorModel& model) {
  ojson j;
  j["format"] = "forcedecode-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = to_string(model.kind);
  j["feature_contract"] = model.feature_contract();
  ojson p;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          p["weights"] = vector_to_json(m.weights);
          p["intercept"] = m.intercept;
          p["ridge"] = m.ridge;
          p["single_set"] = m.single_set;
        } else if constexpr (std::is_same_v<T, PlsModel>) {
          p["n_components"] = m.n_components;
          p["x_weights"] = matrix_to_json(m.x_weights);
          p["x_loadings"] = matrix_to_json(m.x_loadings);
          p["y_loadings"] = vector_to_json(m.y_loadings);
          p["x_mean"] = vector_to_json(m.x_mean);
          p["x_std"] = vector_to_json(m.x_std);
          p["y_mean"] = m.y_mean;
          p["coef"] = vector_to_json(m.coef);
          p["cv_mse"] = vector_to_json(m.cv_mse);
        } else {
          p["sizes"] = m.sizes;
          p["activation"] = to_string(m.activation);
          ojson layers = ojson::array();
          for (const auto& L : m.layers) layers.push_back({{"W", matrix_to_json(L.W)}, {"b", vector_to_json(L.b)}});
          p["layers"] = layers;
          p["x_mean"] = vector_to_json(m.x_mean);
          p["x_scale"] = vector_to_json(m.x_scale);
          p["y_mean"] = m.y_mean;
          p["y_scale"] = m.y_scale;
          p["loss_log"] = m.loss_log;
          p["val_log"] = m.val_log;
          p["best_epoch"] = m.best_epoch;
          p["config"] = to_json(m.config);
          p["seed"] = m.config.seed;
        }
      },
      model.params);
  j["params"] = p;
  return j;
}

inline RegressorModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "forcedecode-model") throw DataError("not a model file");
    const int v = j.at("version").get<int>();
    if (v != kModelFormatVersion) throw DataError("unsupported model format version " + std::to_string(v));
    RegressorModel out;
    out.kind = model_kind_from_string(j.at("kind").get<std::string>());
    const auto contract = j.at("feature_contract").get<std::vector<std::string>>();
    const auto& p = j.at("params");
    switch (out.kind) {
      case ModelKind::sflr:
      case ModelKind::mlr: {
        LinearModel m;
        m.weights = vector_from_json(p.at("weights"));
        m.intercept = p.at("intercept").get<double>();
        m.ridge = p.value("ridge", 0.0);
        m.single_set = p.value("single_set", false);
        m.feature_contract = contract;
        if (static_cast<std::size_t>(m.weights.size()) != contract.size()) throw DataError("linear model: weight count differs from contract");
        out.params = std::move(m);
        break;
      }
      case ModelKind::plsr: {
        PlsModel m;
        m.n_components = p.at("n_components").get<int>();
        m.x_weights = matrix_from_json(p.at("x_weights"));
        m.x_loadings = matrix_from_json(p.at("x_loadings"));
        m.y_loadings = vector_from_json(p.at("y_loadings"));
        m.x_mean = vector_from_json(p.at("x_mean"));
        m.x_std = vector_from_json(p.at("x_std"));
        m.y_mean = p.at("y_mean").get<double>();
        m.coef = vector_from_json(p.at("coef"));
        m.cv_mse = vector_from_json(p.at("cv_mse"));
        m.feature_contract = contract;
        if (static_cast<std::size_t>(m.coef.size()) != contract.size()) throw DataError("PLS model: coefficient count differs from contract");
        out.params = std::move(m);
        break;
      }
      case ModelKind::nnr: {
        MlpModel m;
        m.sizes = p.at("sizes").get<std::vector<int>>();
        m.activation = activation_from_string(p.at("activation").get<std::string>());
        for (const auto& L : p.at("layers")) m.layers.push_back({matrix_from_json(L.at("W")), vector_from_json(L.at("b"))});
        m.x_mean = vector_from_json(p.at("x_mean"));
        m.x_scale = vector_from_json(p.at("x_scale"));
        m.y_mean = p.at("y_mean").get<double>();
        m.y_scale = p.at("y_scale").get<double>();
        m.loss_log = p.at("loss_log").get<std::vector<double>>();
        m.val_log = p.at("val_log").get<std::vector<double>>();
        m.best_epoch = p.at("best_epoch").get<int>();
        m.config = fit_config_from_json(p.at("config"));
        m.feature_contract = contract;
        if (m.layers.size() + 1 != m.sizes.size()) throw DataError("MLP model: layer count differs from sizes");
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
          if (m.layers[l].W.rows() != m.sizes[l + 1] || m.layers[l].W.cols() != m.sizes[l] ||
              m.layers[l].b.size() != m.sizes[l + 1]) {
            throw DataError("MLP model: layer " + std::to_string(l) + " shape differs from sizes");
          }
        }
        if (static_cast<std::size_t>(m.sizes.front()) != contract.size()) throw DataError("MLP model: input size differs from contract");
        out.params = std::move(m);
        break;
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Feature tables as CSV: time_s, force_n, then the feature columns.
// ---------------------------------------------------------------------------

inline std::string feature_table_csv(const FeatureTable& t) {
  std::ostringstream ss;
  ss << "time_s,force_n";
  for (const auto& n : t.feature_names) ss << ',' << n;
  ss << '\n';
  for (Eigen::Index i = 0; i < t.n_rows(); ++i) {
    ss << detail::format_double(t.window_times(i)) << ',' << detail::format_double(t.target(i));
    for (Eigen::Index j = 0; j < t.n_features(); ++j) ss << ',' << detail::format_double(t.values(i, j));
    ss << '\n';
  }
  return ss.str();
}

inline void write_feature_table(const fs::path& path, const FeatureTable& t) { detail::atomic_write(path, feature_table_csv(t)); }

inline FeatureTable read_feature_table(const fs::path& path) {
  const auto csv = detail::read_csv(path);
  if (csv.header.size() < 2 || csv.header[0] != "time_s" || csv.header[1] != "force_n") {
    throw DataError("'" + path.string() + "': feature table must start with time_s,force_n");
  }
  FeatureTable t;
  const auto n = static_cast<Eigen::Index>(csv.columns[0].size());
  t.feature_names.assign(csv.header.begin() + 2, csv.header.end());
  t.window_times = Eigen::Map<const Eigen::VectorXd>(csv.columns[0].data(), n);
  t.target = Eigen::Map<const Eigen::VectorXd>(csv.columns[1].data(), n);
  t.values.resize(n, static_cast<Eigen::Index>(t.feature_names.size()));
  for (std::size_t j = 0; j < t.feature_names.size(); ++j)
    t.values.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(csv.columns[j + 2].data(), n);
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace detail {
inline ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }
}  // namespace detail

inline ojson to_json(const TestResult& t) {
  return {{"test", t.test},
          {"statistic", detail::finite_or_null(t.statistic)},
          {"df1", t.df1},
          {"df2", t.df2},
          {"p_value", t.p_value},
          {"effect_size", detail::finite_or_null(t.effect_size)}};
}

inline ojson to_json(const EvalReport& r) {
  ojson j;
  j["format"] = "forcedecode-report";
  j["version"] = kVersion;
  j["protocol"] = r.protocol;
  j["split_unit"] = r.split_unit;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  ojson results = ojson::array();
  for (const auto& m : r.results) {
    results.push_back({{"group", m.group},
                       {"model", to_string(m.model)},
                       {"cod", m.cod},
                       {"pearson", m.pearson},
                       {"n_train", m.n_train},
                       {"n_validation", m.n_validation},
                       {"n_test", m.n_test},
                       {"n_features", m.n_features}});
  }
  j["results"] = results;
  ojson sums = ojson::array();
  for (const auto& s : r.summaries) {
    sums.push_back({{"model", to_string(s.model)},
                    {"mean_cod", s.mean_cod},
                    {"sd_cod", s.sd_cod},
                    {"cv_percent", detail::finite_or_null(s.cv_percent)},
                    {"mean_pearson", s.mean_pearson}});
  }
  j["summaries"] = sums;
  ojson comps = ojson::array();
  for (const auto& c : r.comparisons) {
    auto t = to_json(c.result);
    t["name"] = c.name;
    comps.push_back(t);
  }
  j["comparisons"] = comps;
  ojson sel = ojson::array();
  for (const auto& s : r.selections) {
    sel.push_back({{"group", s.group},
                   {"chosen_channels", s.chosen_channels},
                   {"channel_covariance", s.channel_covariance},
                   {"chosen_components", s.chosen_components},
                   {"component_covariance", s.component_covariance},
                   {"component_kinds", s.component_kinds}});
  }
  j["selections"] = sel;
  ojson corr = ojson::array();
  for (const auto& c : r.feature_correlations) corr.push_back({{"group", c.group}, {"feature", c.feature}, {"r", c.r}});
  j["feature_correlations"] = corr;
  ojson abl = ojson::array();
  for (const auto& a : r.ablation) {
    ojson g = ojson::object();
    for (const auto& [grp, v] : a.group_cod) g[grp] = v;
    abl.push_back({{"row", a.row}, {"label", a.label}, {"stages", a.stages}, {"group_cod", g}, {"mean_cod", a.mean_cod}});
  }
  j["ablation"] = abl;
  return j;
}

// One row per group x model.
inline std::string results_csv(const EvalReport& r) {
  std::ostringstream ss;
  ss << "protocol,split_unit,group,model,cod,pearson,n_train,n_validation,n_test,n_features\n";
  for (const auto& m : r.results) {
    ss << r.protocol << ',' << r.split_unit << ',' << m.group << ',' << to_string(m.model) << ','
       << detail::format_double(m.cod) << ',' << detail::format_double(m.pearson) << ',' << m.n_train << ','
       << m.n_validation << ',' << m.n_test << ',' << m.n_features << '\n';
  }
  return ss.str();
}

inline std::string ablation_csv(const EvalReport& r) {
  std::ostringstream ss;
  ss << "row,label,stages,mean_cod\n";
  for (const auto& a : r.ablation) {
    ss << a.row << ",\"" << a.label << "\",\"" << a.stages << "\"," << detail::format_double(a.mean_cod) << '\n';
  }
  return ss.str();
}

// Predicted vs actual force on test windows.
inline std::string predictions_csv(const EvalReport& r) {
  std::ostringstream ss;
  ss << "group,model,time_s,actual_n,predicted_n\n";
  for (const auto& m : r.results) {
    for (Eigen::Index i = 0; i < m.actual.size(); ++i) {
      ss << m.group << ',' << to_string(m.model) << ',' << detail::format_double(m.times(i)) << ','
         << detail::format_double(m.actual(i)) << ',' << detail::format_double(m.predicted(i)) << '\n';
    }
  }
  return ss.str();
}

inline std::string feature_correlations_csv(const EvalReport& r) {
  std::ostringstream ss;
  ss << "group,feature,r\n";
  for (const auto& c : r.feature_correlations) ss << c.group << ',' << c.feature << ',' << detail::format_double(c.r) << '\n';
  return ss.str();
}

}  // namespace forcedecode
