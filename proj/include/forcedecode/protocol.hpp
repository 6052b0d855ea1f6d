#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "forcedecode/data_io.hpp"
#include "forcedecode/error.hpp"
#include "forcedecode/metrics.hpp"
#include "forcedecode/pipeline.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/regressors.hpp"

namespace forcedecode {

enum class ProtocolMode { subject_specific, subject_independent };
enum class SplitUnit { trial, block, window };

inline std::string to_string(ProtocolMode m) { return m == ProtocolMode::subject_specific ? "ss" : "si"; }
inline ProtocolMode protocol_mode_from_string(const std::string& s) {
  if (s == "ss" || s == "subject_specific") return ProtocolMode::subject_specific;
  if (s == "si" || s == "subject_independent") return ProtocolMode::subject_independent;
  throw ConfigError("unknown protocol '" + s + "' (valid: ss, si)");
}
inline std::string to_string(SplitUnit u) {
  switch (u) {
    case SplitUnit::trial: return "trial";
    case SplitUnit::block: return "block";
    case SplitUnit::window: return "window";
  }
  return "?";
}
inline SplitUnit split_unit_from_string(const std::string& s) {
  if (s == "trial") return SplitUnit::trial;
  if (s == "block") return SplitUnit::block;
  if (s == "window") return SplitUnit::window;
  throw ConfigError("unknown split unit '" + s + "' (valid: trial, block, window)");
}

// Ratios are train : test : validation.
struct SplitPlan {
  ProtocolMode mode = ProtocolMode::subject_specific;
  SplitUnit unit = SplitUnit::trial;
  double train = 0.7;
  double test = 0.2;
  double validation = 0.1;
  double block_s = 1.0;  // block unit: contiguous span per split label
  double purge_s = -1.0;  // >= 0: drop fit windows within this gap of a test window
  std::uint64_t seed = 0;
  std::optional<std::string> held_out_subject;  // SI: evaluate only this fold

  void validate() const {
    if (!(train > 0.0 && test >= 0.0 && validation >= 0.0)) throw ConfigError("SplitPlan: ratios must be non-negative, train > 0");
    if (std::abs(train + test + validation - 1.0) > 1e-9) throw ConfigError("SplitPlan: ratios must sum to 1");
    if (mode == ProtocolMode::subject_specific && !(test > 0.0)) throw ConfigError("SplitPlan: test ratio must be positive");
    if (!(block_s > 0.0)) throw ConfigError("SplitPlan: block_s must be positive");
    if (!(purge_s >= -1.0)) throw ConfigError("SplitPlan: purge_s must be >= 0 (or -1 for off)");
  }
};

namespace detail {

// Largest-remainder apportionment of n items; ties go to the earlier slot.
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& ratios) {
  double total = 0.0;
  for (double r : ratios) total += r;
  std::vector<std::size_t> out(ratios.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = static_cast<double>(n) * ratios[i] / total;
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += out[i];
    rem.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

}  // namespace detail

// Block unit geometry, in windows: each block spans `block` consecutive
// windows, the last `guard` of which overlap the next block and are dropped.
struct BlockGeometry {
  std::size_t block = 1;
  std::size_t guard = 0;
};

inline BlockGeometry block_geometry(double block_s, const WindowSpec& w) {
  BlockGeometry g;
  g.block = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(block_s / w.step_s)));
  const auto overlap = static_cast<std::size_t>(std::ceil(w.width_s / w.step_s - 1e-9));
  g.guard = overlap > 0 ? overlap - 1 : 0;
  if (g.guard >= g.block) throw ConfigError("block_s must exceed the window width");
  return g;
}

// Splits the analysis windows of a group of trials. `counts[i]` is the number
// of analysis windows in trial i. With ratios (train, test, validation).
inline SplitAssignment assign_splits(const std::vector<std::size_t>& counts, SplitUnit unit, double train, double test,
                                     double validation, std::uint64_t seed, BlockGeometry geom = {}) {
  SplitAssignment out(counts.size());
  Rng rng(seed);
  const std::vector<double> ratios{train, test, validation};
  const Split labels[] = {Split::train, Split::test, Split::validation};
  if (unit == SplitUnit::block) {
    // (trial, first window, end window) per block, pooled over the group.
    std::vector<std::array<std::size_t, 3>> blocks;
    for (std::size_t t = 0; t < counts.size(); ++t) {
      out[t].assign(counts[t], Split::excluded);
      for (std::size_t j = 0; j < counts[t]; j += geom.block) blocks.push_back({t, j, std::min(counts[t], j + geom.block)});
    }
    if (blocks.size() < 2 && test > 0.0) throw DataError("block split needs at least 2 blocks per group; lower block_s");
    rng.shuffle(blocks);
    auto n = detail::apportion(blocks.size(), ratios);
    if (n[0] == 0) throw DataError("block split left no training block");
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < n[s]; ++k, ++at) {
        const auto [t, b, e] = blocks[at];
        // the trailing windows reach into the next block
        const std::size_t keep_end = e == counts[t] ? e : e - geom.guard;
        for (std::size_t j = b; j < keep_end; ++j) out[t][j] = labels[s];
      }
    return out;
  }
  if (unit == SplitUnit::window) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t t = 0; t < counts.size(); ++t) {
      out[t].assign(counts[t], Split::excluded);
      for (std::size_t j = 0; j < counts[t]; ++j) all.emplace_back(t, j);
    }
    rng.shuffle(all);
    const auto n = detail::apportion(all.size(), ratios);
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < n[s]; ++k, ++at) out[all[at].first][all[at].second] = labels[s];
    return out;
  }
  const std::size_t T = counts.size();
  auto n = detail::apportion(T, ratios);
  // Trial mode: at least one training trial, and one test trial when asked for.
  auto take_from_largest = [&](std::size_t into) {
    std::size_t src = 0;
    for (std::size_t s = 0; s < 3; ++s)
      if (s != into && n[s] > n[src]) src = s;
    if (src == into || n[src] <= 1) throw DataError("trial-level split needs more trials; use the window split unit");
    --n[src];
    ++n[into];
  };
  if (T < 2 && test > 0.0) throw DataError("trial-level split needs at least 2 trials per group; use the window split unit");
  if (n[0] == 0) take_from_largest(0);
  if (test > 0.0 && n[1] == 0) take_from_largest(1);
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t at = 0;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < n[s]; ++k, ++at) out[order[at]].assign(counts[order[at]], labels[s]);
  return out;
}

// Excludes train/validation windows whose span comes within `gap_s` of a test
// window of the same trial.
inline void purge_near_test(SplitAssignment& split, const WindowSpec& w, double gap_s) {
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil((w.width_s + gap_s) / w.step_s - 1e-9)) - 1;
  for (auto& trial : split) {
    std::vector<bool> near(trial.size(), false);
    const auto n = static_cast<std::ptrdiff_t>(trial.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (trial[static_cast<std::size_t>(i)] != Split::test) continue;
      for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - reach); j <= std::min(n - 1, i + reach); ++j) near[static_cast<std::size_t>(j)] = true;
    }
    for (std::size_t i = 0; i < trial.size(); ++i)
      if (near[i] && trial[i] != Split::test) trial[i] = Split::excluded;
  }
}

// Which feature columns each model sees: "auto" (per-model default), or one
// of erp, psd, erds, all.
inline FeatureTable select_model_inputs(ModelKind kind, const FeatureTable& t, const std::string& which) {
  FeatureTable out;
  if (which == "auto") {
    out = default_model_inputs(kind, t);
    if (out.n_features() == 0) out = t;
  } else if (which == "erp") {
    out = t.columns_with_prefix({"erp_"});
  } else if (which == "psd") {
    out = t.columns_with_suffix("_psd");
  } else if (which == "erds") {
    out = t.columns_with_suffix("_erds");
  } else if (which == "all") {
    out = t;
  } else {
    throw ConfigError("unknown model input block '" + which + "' (valid: auto, erp, psd, erds, all)");
  }
  if (out.n_features() == 0) throw ConfigError("model " + to_string(kind) + ": input block '" + which + "' has no columns in this feature set");
  return out;
}

struct ProtocolConfig {
  PipelineConfig pipeline;
  FitConfig fit;
  double linear_ridge = 1e-3;  // MLR/SFLR; PSD and ERDS columns are exactly collinear
  std::vector<ModelKind> models = all_model_kinds();
  std::map<std::string, std::string> model_inputs{{"sflr", "auto"}, {"mlr", "auto"}, {"plsr", "auto"}, {"nnr", "auto"}};
  int pls_max_components = 20;
  int pls_folds = 5;
  SplitPlan plan;
  unsigned threads = 0;  // 0: FORCEDECODE_THREADS or hardware concurrency

  void validate() const {
    pipeline.validate();
    fit.validate();
    plan.validate();
    if (!(linear_ridge >= 0.0)) throw ConfigError("ProtocolConfig: linear_ridge must be non-negative");
    if (models.empty()) throw ConfigError("ProtocolConfig: no models requested");
    if (pls_max_components < 1 || pls_folds < 2) throw ConfigError("ProtocolConfig: invalid PLSR settings");
  }

  FitConfig fit_for(ModelKind k) const {
    FitConfig f = fit;
    if (k == ModelKind::sflr || k == ModelKind::mlr) f.ridge = linear_ridge;
    return f;
  }

  std::string inputs_for(ModelKind k) const {
    const auto it = model_inputs.find(to_string(k));
    return it == model_inputs.end() ? "auto" : it->second;
  }
};

// Fits one model on its configured input block. Validation rows only feed
// the NNR best-epoch restore.
inline RegressorModel train_model(ModelKind kind, const FeatureTable& train, const FeatureTable* validation,
                                  const ProtocolConfig& cfg, std::uint64_t seed) {
  FitConfig fc = cfg.fit_for(kind);
  fc.seed = seed;
  const auto which = cfg.inputs_for(kind);
  const FeatureTable tr = select_model_inputs(kind, train, which);
  switch (kind) {
    // inputs are already restricted to the model's block
    case ModelKind::sflr:
    case ModelKind::mlr: return {kind, fit_linear(tr, fc, false)};
    case ModelKind::plsr: return {kind, fit_plsr(tr, fc, cfg.pls_max_components, cfg.pls_folds)};
    case ModelKind::nnr: {
      if (!validation || validation->n_rows() == 0) return {kind, fit_mlp(tr, fc, nullptr)};
      const FeatureTable va = select_model_inputs(kind, *validation, which);
      return {kind, fit_mlp(tr, fc, &va)};
    }
  }
  throw ConfigError("unknown model kind");
}

struct ModelResult {
  std::string group;  // subject id (SS) or held-out subject id (SI)
  ModelKind model = ModelKind::nnr;
  double cod = 0.0;
  double pearson = 0.0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::size_t n_features = 0;
  // Test rows for figure output.
  Eigen::VectorXd times;
  Eigen::VectorXd actual;
  Eigen::VectorXd predicted;
};

struct ModelSummary {
  ModelKind model = ModelKind::nnr;
  double mean_cod = 0.0;
  double sd_cod = 0.0;
  double cv_percent = 0.0;  // population sd / mean x 100, NaN when undefined
  double mean_pearson = 0.0;
};

struct NamedTest {
  std::string name;
  TestResult result;
};

struct FeatureCorrelation {
  std::string group;
  std::string feature;
  double r = 0.0;
};

struct SelectionSummary {
  std::string group;
  std::vector<std::string> chosen_channels;
  std::vector<double> channel_covariance;
  std::vector<std::size_t> chosen_components;
  std::vector<double> component_covariance;
  std::vector<std::string> component_kinds;  // cleaning ICA labels
};

struct AblationRow {
  std::size_t row = 0;
  std::string label;
  std::string stages;
  std::vector<std::pair<std::string, double>> group_cod;
  double mean_cod = 0.0;
};

struct EvalReport {
  std::string protocol;
  std::string split_unit;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<ModelResult> results;
  std::vector<ModelSummary> summaries;
  std::vector<NamedTest> comparisons;
  std::vector<FeatureCorrelation> feature_correlations;
  std::vector<SelectionSummary> selections;
  std::vector<AblationRow> ablation;

  const ModelSummary& summary(ModelKind k) const {
    for (const auto& s : summaries)
      if (s.model == k) return s;
    throw DataError("EvalReport: no summary for model " + to_string(k));
  }
};

// Everything fit for one group (subject in SS, fold in SI).
struct GroupArtifacts {
  std::string group;
  FittedPipeline pipeline;
  std::vector<RegressorModel> models;
  // (subject, trial) per row of `split`, in the order the group saw them
  std::vector<std::pair<std::string, std::string>> trials;
  SplitAssignment split;
};

struct ProtocolRun {
  EvalReport report;
  std::vector<GroupArtifacts> groups;
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FORCEDECODE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results are written
// by index so the outcome does not depend on scheduling. The first exception
// (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace detail {

struct GroupJob {
  std::string group;
  TrialSet trials;
  SplitAssignment split;
  std::uint64_t seed = 0;
};

struct GroupOutcome {
  GroupArtifacts artifacts;
  std::vector<ModelResult> results;
  std::vector<FeatureCorrelation> correlations;
  SelectionSummary selection;
};

inline std::vector<std::size_t> window_counts(const TrialSet& trials, const PipelineConfig& cfg) {
  std::vector<std::size_t> c;
  for (const auto& t : trials) c.push_back(analysis_windows(t.signal.n_samples(), t.signal.fs(), cfg).size());
  return c;
}

inline GroupOutcome run_group(const GroupJob& job, const ProtocolConfig& cfg) {
  PipelineConfig pcfg = cfg.pipeline;
  pcfg.seed = Rng::derive(cfg.pipeline.seed, job.seed);
  auto prepared = fit_pipeline(job.trials, job.split, pcfg);
  const FeatureTable train = gather_rows(prepared.tables, job.split, Split::train);
  const FeatureTable val = gather_rows(prepared.tables, job.split, Split::validation);
  const FeatureTable test = gather_rows(prepared.tables, job.split, Split::test);
  if (train.n_rows() < 2) throw DataError("group " + job.group + ": fewer than two training windows");
  if (test.n_rows() < 2) throw DataError("group " + job.group + ": fewer than two test windows");

  GroupOutcome out;
  out.artifacts.group = job.group;
  for (const auto& t : job.trials) out.artifacts.trials.emplace_back(t.subject_id, t.trial_id);
  out.artifacts.split = job.split;
  for (ModelKind kind : cfg.models) {
    const auto seed = Rng::derive(cfg.fit.seed, job.seed * 16 + static_cast<std::uint64_t>(kind));
    RegressorModel model = train_model(kind, train, val.n_rows() > 0 ? &val : nullptr, cfg, seed);
    const FeatureTable tr = select_model_inputs(kind, train, cfg.inputs_for(kind));
    ModelResult r;
    r.group = job.group;
    r.model = kind;
    r.predicted = predict(model, contract_columns(test, model.feature_contract()));
    r.actual = test.target;
    r.times = test.window_times;
    r.cod = cod(r.actual, r.predicted);
    const double sd_pred = std::sqrt((r.predicted.array() - r.predicted.mean()).square().mean());
    r.pearson = sd_pred > 0.0 ? pearson(r.actual, r.predicted) : 0.0;
    r.n_train = static_cast<std::size_t>(tr.n_rows());
    r.n_validation = static_cast<std::size_t>(val.n_rows());
    r.n_test = static_cast<std::size_t>(test.n_rows());
    r.n_features = static_cast<std::size_t>(tr.n_features());
    out.results.push_back(std::move(r));
    out.artifacts.models.push_back(std::move(model));
  }

  // Feature/force correlation on training rows; skipped for raw samples.
  if (pcfg.stages.features) {
    const double ysd = std::sqrt((train.target.array() - train.target.mean()).square().mean());
    for (Eigen::Index j = 0; j < train.n_features(); ++j) {
      const Eigen::VectorXd col = train.values.col(j);
      const double sd = std::sqrt((col.array() - col.mean()).square().mean());
      const double r = sd > 0.0 && ysd > 0.0 ? pearson(col, train.target) : 0.0;
      out.correlations.push_back({job.group, train.feature_names[static_cast<std::size_t>(j)], r});
    }
  }
  const auto& p = prepared.pipeline;
  out.selection.group = job.group;
  out.selection.chosen_channels = p.config.stages.channels ? p.channel_report.chosen_channels : p.input_labels;
  for (Eigen::Index i = 0; i < p.channel_report.channel_covariance.size(); ++i)
    out.selection.channel_covariance.push_back(p.channel_report.channel_covariance(i));
  out.selection.chosen_components = p.component_report.chosen_components;
  for (Eigen::Index i = 0; i < p.component_report.component_covariance.size(); ++i)
    out.selection.component_covariance.push_back(p.component_report.component_covariance(i));
  for (const auto& l : p.component_labels) out.selection.component_kinds.push_back(to_string(l.kind));
  out.artifacts.pipeline = std::move(prepared.pipeline);
  return out;
}

inline std::vector<GroupJob> make_jobs(const TrialSet& trials, const ProtocolConfig& cfg) {
  const auto subjects = subject_ids(trials);
  std::vector<GroupJob> jobs;
  const auto& plan = cfg.plan;
  if (plan.mode == ProtocolMode::subject_specific) {
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      GroupJob job;
      job.group = subjects[s];
      job.seed = s;
      for (const auto& t : trials)
        if (t.subject_id == subjects[s]) job.trials.push_back(t);
      job.split = assign_splits(window_counts(job.trials, cfg.pipeline), plan.unit, plan.train, plan.test, plan.validation,
                                Rng::derive(plan.seed, s), block_geometry(plan.block_s, cfg.pipeline.window));
      if (plan.purge_s >= 0.0) purge_near_test(job.split, cfg.pipeline.window, plan.purge_s);
      jobs.push_back(std::move(job));
    }
    return jobs;
  }
  if (subjects.size() < 2) throw DataError("subject-independent protocol needs at least 2 subjects, found " + std::to_string(subjects.size()));
  if (plan.held_out_subject &&
      std::find(subjects.begin(), subjects.end(), *plan.held_out_subject) == subjects.end()) {
    throw ConfigError("held-out subject '" + *plan.held_out_subject + "' not in dataset");
  }
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    if (plan.held_out_subject && subjects[s] != *plan.held_out_subject) continue;
    GroupJob job;
    job.group = subjects[s];
    job.seed = s;
    TrialSet train_trials, test_trials;
    for (const auto& t : trials) (t.subject_id == subjects[s] ? test_trials : train_trials).push_back(t);
    auto split = assign_splits(window_counts(train_trials, cfg.pipeline), plan.unit, plan.train, 0.0, plan.validation,
                               Rng::derive(plan.seed, s), block_geometry(plan.block_s, cfg.pipeline.window));
    for (const auto& t : test_trials) {
      split.emplace_back(analysis_windows(t.signal.n_samples(), t.signal.fs(), cfg.pipeline).size(), Split::test);
    }
    job.trials = std::move(train_trials);
    job.trials.insert(job.trials.end(), test_trials.begin(), test_trials.end());
    job.split = std::move(split);
    jobs.push_back(std::move(job));
  }
  return jobs;
}

inline void summarise(EvalReport& rep, const std::vector<ModelKind>& models) {
  std::vector<std::string> groups;
  for (const auto& r : rep.results)
    if (std::find(groups.begin(), groups.end(), r.group) == groups.end()) groups.push_back(r.group);
  std::map<ModelKind, std::vector<double>> cods;
  for (ModelKind k : models) {
    std::vector<double> c, p;
    for (const auto& r : rep.results)
      if (r.model == k) {
        c.push_back(r.cod);
        p.push_back(r.pearson);
      }
    if (c.empty()) continue;
    ModelSummary s;
    s.model = k;
    for (double v : c) s.mean_cod += v;
    s.mean_cod /= static_cast<double>(c.size());
    for (double v : c) s.sd_cod += (v - s.mean_cod) * (v - s.mean_cod);
    s.sd_cod = std::sqrt(s.sd_cod / static_cast<double>(c.size()));
    s.cv_percent = std::abs(s.mean_cod) > 1e-12 ? 100.0 * coeff_variation(c) : std::numeric_limits<double>::quiet_NaN();
    for (double v : p) s.mean_pearson += v;
    s.mean_pearson /= static_cast<double>(p.size());
    rep.summaries.push_back(s);
    cods[k] = std::move(c);
  }
  // Comparisons across groups need at least two groups.
  if (groups.size() < 2 || cods.size() < 2) return;
  if (cods.count(ModelKind::nnr)) {
    for (ModelKind k : models) {
      if (k == ModelKind::nnr || !cods.count(k)) continue;
      rep.comparisons.push_back({"paired_t nnr vs " + to_string(k), paired_t_test(cods[ModelKind::nnr], cods[k])});
    }
  }
  std::vector<std::vector<double>> by_model;
  std::vector<std::vector<std::vector<double>>> cells;
  for (const auto& [k, c] : cods) {
    by_model.push_back(c);
    std::vector<std::vector<double>> row;
    for (double v : c) row.push_back({v});
    cells.push_back(std::move(row));
  }
  rep.comparisons.push_back({"one_way_anova model", one_way_anova(by_model)});
  if (groups.size() >= 2 && by_model.size() >= 2) {
    const auto two = two_way_anova(cells);
    rep.comparisons.push_back({"two_way_anova model", two.factor_a});
    rep.comparisons.push_back({"two_way_anova subject", two.factor_b});
  }
}

}  // namespace detail

// Fits and evaluates every requested model per group. All fitted state comes
// from the group's training windows.
inline ProtocolRun run_protocol_detailed(const TrialSet& trials, const ProtocolConfig& cfg) {
  cfg.validate();
  if (trials.empty()) throw DataError("run_protocol: empty dataset");
  const auto jobs = detail::make_jobs(trials, cfg);
  std::vector<detail::GroupOutcome> outcomes(jobs.size());
  parallel_for(jobs.size(), resolve_threads(cfg.threads), [&](std::size_t i) { outcomes[i] = detail::run_group(jobs[i], cfg); });
  ProtocolRun run;
  run.report.protocol = to_string(cfg.plan.mode);
  run.report.split_unit = to_string(cfg.plan.unit);
  run.report.seed = cfg.plan.seed;
  for (auto& o : outcomes) {
    for (auto& r : o.results) run.report.results.push_back(std::move(r));
    for (auto& c : o.correlations) run.report.feature_correlations.push_back(std::move(c));
    run.report.selections.push_back(std::move(o.selection));
    run.groups.push_back(std::move(o.artifacts));
  }
  detail::summarise(run.report, cfg.models);
  return run;
}

inline EvalReport run_protocol(const TrialSet& trials, const ProtocolConfig& cfg) {
  return run_protocol_detailed(trials, cfg).report;
}

struct AblationStep {
  std::string label;
  StageFlags stages;
};

// Cumulative preprocessing configurations, least to most processed.
inline std::vector<AblationStep> ablation_steps() {
  StageFlags s = StageFlags::none();
  std::vector<AblationStep> steps;
  steps.push_back({"raw", s});
  s.filter = s.notch = s.clean = true;
  steps.push_back({"+line-noise filter", s});
  s.components = true;
  steps.push_back({"+component selection", s});
  s.channels = true;
  steps.push_back({"+channel selection", s});
  s.features = true;
  steps.push_back({"+feature extraction", s});
  return steps;
}

// One NNR CoD per cumulative configuration, averaged over groups. Splits and
// seeds are shared by every row.
inline EvalReport run_ablation(const TrialSet& trials, const ProtocolConfig& cfg) {
  ProtocolConfig base = cfg;
  base.models = {ModelKind::nnr};
  base.validate();
  const auto steps = ablation_steps();
  std::vector<EvalReport> rows(steps.size());
  const unsigned threads = resolve_threads(cfg.threads);
  // Rows run one after another; groups inside a row run in parallel.
  for (std::size_t i = 0; i < steps.size(); ++i) {
    ProtocolConfig c = base;
    c.pipeline.stages = steps[i].stages;
    c.threads = threads;
    rows[i] = run_protocol(trials, c);
  }
  EvalReport rep;
  rep.protocol = to_string(cfg.plan.mode);
  rep.split_unit = to_string(cfg.plan.unit);
  rep.seed = cfg.plan.seed;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    AblationRow row;
    row.row = i + 1;
    row.label = steps[i].label;
    row.stages = steps[i].stages.to_string();
    for (const auto& r : rows[i].results) row.group_cod.emplace_back(r.group, r.cod);
    row.mean_cod = rows[i].summary(ModelKind::nnr).mean_cod;
    rep.ablation.push_back(std::move(row));
  }
  return rep;
}

}  // namespace forcedecode
