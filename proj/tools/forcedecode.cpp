// forcedecode command-line front end.
//
//   forcedecode synth      --out DIR [--config run.json] [--seed N] [--format bin|csv] [--force]
//   forcedecode preprocess --in DIR --out DIR [--stages all|none|a,b,..] [--config run.json] [--force]
//   forcedecode features   --in DIR --out DIR [--set erp|psd|erds|all] [--config run.json] [--force]
//   forcedecode train      --features F.csv --model nnr --out model.json [--validation V.csv]
//   forcedecode evaluate   --model model.json --features F.csv --report R.json
//   forcedecode evaluate   --protocol ss|si --in DIR --report R.json [--models-out DIR]
//   forcedecode ablate     --in DIR --report R.json
//
// Exit codes: 0 ok, 2 configuration, 3 data, 4 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "forcedecode/forcedecode.hpp"

namespace fs = std::filesystem;
using namespace forcedecode;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

RunConfig load_config(const Common& c) {
  RunConfig rc;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("cannot open config '" + c.config + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config '" + c.config + "': " + e.what());
    }
    rc = run_config_from_json(j);
  }
  if (c.threads > 0) rc.protocol.threads = c.threads;
  return rc;
}

// One seed drives splits, unsupervised fits and model initialisation.
void apply_protocol_seed(RunConfig& rc, std::uint64_t seed) {
  rc.protocol.plan.seed = seed;
  rc.protocol.pipeline.seed = seed;
  rc.protocol.fit.seed = seed;
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw ConfigError("'" + out.string() + "' exists and is not a directory");
    if (!fs::is_empty(out)) {
      if (!force) throw ConfigError("output directory '" + out.string() + "' is not empty (use --force to overwrite)");
      fs::remove_all(out);
    }
  }
  fs::create_directories(out);
}

void write_json(const fs::path& p, const ojson& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  detail::atomic_write(p, j.dump(2) + "\n");
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  detail::atomic_write(p, s);
}

// Sidecar next to a report: R.json -> R.<suffix>
fs::path sidecar(const fs::path& report, const std::string& suffix) {
  fs::path p = report;
  p.replace_extension();
  return p.string() + "." + suffix;
}

ojson provenance(const RunConfig& rc, std::uint64_t seed) {
  return {{"version", kVersion}, {"config_hash", config_hash(rc)}, {"seed", seed}};
}

nlohmann::json read_json_file(const fs::path& p) {
  const auto text = detail::read_file(p);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + p.string() + "': " + e.what());
  }
}

// Every window of every trial used for fitting: the standalone preprocess and
// features commands have no held-out part.
SplitAssignment all_train(const TrialSet& trials, const PipelineConfig& cfg) {
  SplitAssignment s;
  for (const auto& t : trials) s.emplace_back(analysis_windows(t.signal.n_samples(), t.signal.fs(), cfg).size(), Split::train);
  return s;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& c, const std::string& out, const std::string& format, bool force) {
  RunConfig rc = load_config(c);
  if (c.seed) rc.synth.seed = *c.seed;
  if (!format.empty()) rc.payload = format;
  rc.validate();
  prepare_out_dir(out, force);
  const auto ds = generate_synthetic(rc.synth);
  write_synthetic(out, ds, payload_format_from_string(rc.payload));
  ojson cfg = to_json(rc);
  cfg["provenance"] = provenance(rc, rc.synth.seed);
  write_json(fs::path(out) / "run_config.json", cfg);
  std::cout << "wrote " << ds.trials.size() << " trials for " << rc.synth.n_subjects << " subjects to " << out << "\n";
  return 0;
}

int cmd_preprocess(const Common& c, const std::string& in, const std::string& out, const std::string& stages, bool force) {
  RunConfig rc = load_config(c);
  if (c.seed) apply_protocol_seed(rc, *c.seed);
  StageFlags flags = StageFlags::parse(stages);
  flags.features = false;
  rc.protocol.pipeline.stages = flags;
  rc.validate();
  const TrialSet trials = read_dataset(in);
  if (trials.empty()) throw DataError("no trials under '" + in + "'");
  prepare_out_dir(out, force);

  ojson report;
  report["provenance"] = provenance(rc, rc.protocol.pipeline.seed);
  report["stages"] = flags.to_string();
  if (flags.to_string() == "none") {
    // Passthrough: the trial files are copied byte for byte.
    for (const auto& entry : fs::recursive_directory_iterator(in)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), in);
      if (rel.begin()->string().rfind("subject_", 0) != 0) continue;
      fs::create_directories((fs::path(out) / rel).parent_path());
      fs::copy_file(entry.path(), fs::path(out) / rel, fs::copy_options::overwrite_existing);
    }
  } else {
    const auto split = all_train(trials, rc.protocol.pipeline);
    const auto res = fit_pipeline(trials, split, rc.protocol.pipeline);
    const auto& p = res.pipeline;
    const auto fmt = payload_format_from_string(rc.payload);
    for (const auto& t : trials) {
      Trial o = t;
      o.signal = p.preprocess(t.signal);
      write_trial(out, o, fmt);
    }
    ojson sel = to_json(p.channel_report);
    // Channels ordered by force covariance, whatever the selection policy.
    ojson ranked = ojson::array();
    if (p.channel_report.channel_covariance.size() > 0) {
      const auto order = detail::argsort_desc(p.channel_report.channel_covariance);
      for (auto i : order) ranked.push_back(p.channel_report.channel_labels[i]);
    }
    report["ranked_channels"] = ranked;
    report["channel_selection"] = sel;
    report["component_selection"] = to_json(p.component_report);
    ojson labels = ojson::array();
    for (const auto& l : p.component_labels) labels.push_back(to_json(l));
    report["component_labels"] = labels;
    write_json(fs::path(out) / "pipeline.json", to_json(p));
  }
  write_json(fs::path(out) / "selection_report.json", report);
  write_json(fs::path(out) / "run_config.json", to_json(rc));
  std::cout << "preprocessed " << trials.size() << " trials (" << flags.to_string() << ") into " << out << "\n";
  return 0;
}

int cmd_features(const Common& c, const std::string& in, const std::string& out, const std::string& set, bool force) {
  RunConfig rc = load_config(c);
  if (c.seed) apply_protocol_seed(rc, *c.seed);
  if (!set.empty()) rc.protocol.pipeline.features.set = feature_set_from_string(set);
  rc.validate();
  const TrialSet trials = read_dataset(in);
  if (trials.empty()) throw DataError("no trials under '" + in + "'");
  prepare_out_dir(out, force);
  const auto split = all_train(trials, rc.protocol.pipeline);
  const auto res = fit_pipeline(trials, split, rc.protocol.pipeline);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    write_feature_table(fs::path(out) / ("subject_" + t.subject_id) / ("trial_" + t.trial_id + ".csv"), res.tables[i]);
  }
  write_feature_table(fs::path(out) / "features.csv", FeatureTable::concat_rows(res.tables));
  write_json(fs::path(out) / "pipeline.json", to_json(res.pipeline));
  write_json(fs::path(out) / "run_config.json", to_json(rc));
  std::cout << "wrote " << res.tables.front().n_features() << " feature columns for " << trials.size() << " trials to " << out << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& features, const std::string& model, const std::string& validation,
              const std::string& out) {
  RunConfig rc = load_config(c);
  if (c.seed) apply_protocol_seed(rc, *c.seed);
  if (!model.empty()) rc.model = model;
  rc.validate();
  const auto kind = model_kind_from_string(rc.model);
  const FeatureTable train = read_feature_table(features);
  std::optional<FeatureTable> val;
  if (!validation.empty()) val = read_feature_table(validation);
  const auto m = train_model(kind, train, val ? &*val : nullptr, rc.protocol, rc.protocol.fit.seed);
  ojson j = to_json(m);
  j["provenance"] = provenance(rc, rc.protocol.fit.seed);
  write_json(out, j);
  write_json(sidecar(out, "config.json"), to_json(rc));
  std::cout << "trained " << to_string(kind) << " on " << train.n_rows() << " windows -> " << out << "\n";
  return 0;
}

int cmd_evaluate_model(const std::string& model_path, const std::string& features, const std::string& report) {
  const auto j = read_json_file(model_path);
  const RegressorModel m = model_from_json(j);
  const FeatureTable t = read_feature_table(features);
  const Eigen::VectorXd y = predict(m, contract_columns(t, m.feature_contract()));
  ojson r;
  r["format"] = "forcedecode-evaluation";
  r["version"] = kVersion;
  r["model"] = to_string(m.kind);
  r["model_hash"] = fnv1a_hex(to_json(m).dump());
  if (j.contains("provenance")) r["model_provenance"] = j["provenance"];
  r["n_windows"] = t.n_rows();
  r["cod"] = detail::finite_or_null(cod(t.target, y));
  const double sd = std::sqrt((y.array() - y.mean()).square().mean());
  r["pearson"] = detail::finite_or_null(sd > 0.0 ? pearson(t.target, y) : 0.0);
  write_json(report, r);
  std::ostringstream csv;
  csv << "time_s,actual_n,predicted_n\n";
  for (Eigen::Index i = 0; i < y.size(); ++i)
    csv << detail::format_double(t.window_times(i)) << ',' << detail::format_double(t.target(i)) << ',' << detail::format_double(y(i)) << '\n';
  write_text(sidecar(report, "predictions.csv"), csv.str());
  std::cout << to_string(m.kind) << " CoD " << r["cod"] << " on " << t.n_rows() << " windows\n";
  return 0;
}

int cmd_evaluate_protocol(const Common& c, const std::string& protocol, const std::string& unit, const std::string& in,
                          const std::string& report, const std::string& models_out) {
  RunConfig rc = load_config(c);
  if (c.seed) apply_protocol_seed(rc, *c.seed);
  if (!protocol.empty()) rc.protocol.plan.mode = protocol_mode_from_string(protocol);
  if (!unit.empty()) rc.protocol.plan.unit = split_unit_from_string(unit);
  rc.validate();
  const TrialSet trials = read_dataset(in);
  if (trials.empty()) throw DataError("no trials under '" + in + "'");
  auto run = run_protocol_detailed(trials, rc.protocol);
  run.report.config_hash = config_hash(rc);
  write_json(report, to_json(run.report));
  write_text(sidecar(report, "results.csv"), results_csv(run.report));
  write_text(sidecar(report, "predictions.csv"), predictions_csv(run.report));
  write_text(sidecar(report, "feature_correlations.csv"), feature_correlations_csv(run.report));
  write_json(sidecar(report, "config.json"), to_json(rc));
  if (!models_out.empty()) {
    for (const auto& g : run.groups) {
      const fs::path dir = fs::path(models_out) / ("group_" + g.group);
      write_json(dir / "pipeline.json", to_json(g.pipeline));
      for (const auto& m : g.models) write_json(dir / (to_string(m.kind) + ".json"), to_json(m));
    }
  }
  for (const auto& s : run.report.summaries)
    std::cout << to_string(s.model) << " mean CoD " << s.mean_cod << " (sd " << s.sd_cod << ")\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& unit, const std::string& in, const std::string& report) {
  RunConfig rc = load_config(c);
  if (c.seed) apply_protocol_seed(rc, *c.seed);
  if (!unit.empty()) rc.protocol.plan.unit = split_unit_from_string(unit);
  rc.validate();
  const TrialSet trials = read_dataset(in);
  if (trials.empty()) throw DataError("no trials under '" + in + "'");
  auto rep = run_ablation(trials, rc.protocol);
  rep.config_hash = config_hash(rc);
  write_json(report, to_json(rep));
  write_text(sidecar(report, "ablation.csv"), ablation_csv(rep));
  write_json(sidecar(report, "config.json"), to_json(rc));
  for (const auto& r : rep.ablation) std::cout << r.row << " " << r.label << " CoD " << r.mean_cod << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grasp-force decoding from EEG"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--config", common.config, "run configuration JSON");
    sc->add_option("--seed", common.seed, "seed override");
    sc->add_option("--threads", common.threads, "worker threads (default: FORCEDECODE_THREADS or all cores)");
  };

  std::string in, out, format, stages = "all", set, model, features, validation, report, protocol, unit, models_out;
  bool force = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--format", format, "payload format: bin or csv");
  synth->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* pre = app.add_subcommand("preprocess", "filter, clean and select; writes preprocessed trials");
  add_common(pre);
  pre->add_option("--in", in, "dataset directory")->required();
  pre->add_option("--out", out, "output directory")->required();
  pre->add_option("--stages", stages, "all, none or a comma list of filter,notch,clean,channels,components");
  pre->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* feat = app.add_subcommand("features", "build per-window feature tables");
  add_common(feat);
  feat->add_option("--in", in, "dataset directory")->required();
  feat->add_option("--out", out, "output directory")->required();
  feat->add_option("--set", set, "erp, psd, erds or all");
  feat->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* train = app.add_subcommand("train", "fit one regressor on a feature table");
  add_common(train);
  train->add_option("--features", features, "training feature CSV")->required();
  train->add_option("--model", model, "sflr, mlr, plsr or nnr");
  train->add_option("--validation", validation, "validation feature CSV (NNR best-epoch restore)");
  train->add_option("--out", out, "model JSON")->required();

  auto* eval = app.add_subcommand("evaluate", "score a model file, or run a full protocol");
  add_common(eval);
  eval->add_option("--model", model, "model JSON (with --features)");
  eval->add_option("--features", features, "feature CSV to score");
  eval->add_option("--protocol", protocol, "ss or si (with --in)");
  eval->add_option("--unit", unit, "split unit: trial, block or window");
  eval->add_option("--in", in, "dataset directory");
  eval->add_option("--models-out", models_out, "also write fitted pipelines and models here");
  eval->add_option("--report", report, "report JSON")->required();

  auto* abl = app.add_subcommand("ablate", "cumulative stage ablation with NNR");
  add_common(abl);
  abl->add_option("--in", in, "dataset directory")->required();
  abl->add_option("--unit", unit, "split unit: trial, block or window");
  abl->add_option("--report", report, "report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(common, out, format, force);
    if (*pre) return cmd_preprocess(common, in, out, stages, force);
    if (*feat) return cmd_features(common, in, out, set, force);
    if (*train) return cmd_train(common, features, model, validation, out);
    if (*eval) {
      if (!model.empty() || !features.empty()) {
        if (model.empty() || features.empty()) throw ConfigError("evaluate: --model and --features go together");
        if (!protocol.empty() || !in.empty()) throw ConfigError("evaluate: use either --model/--features or --protocol/--in");
        return cmd_evaluate_model(model, features, report);
      }
      if (in.empty()) throw ConfigError("evaluate: need --model/--features or --protocol/--in");
      return cmd_evaluate_protocol(common, protocol, unit, in, report, models_out);
    }
    if (*abl) return cmd_ablate(common, unit, in, report);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
