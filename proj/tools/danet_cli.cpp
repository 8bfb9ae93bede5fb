// danet: batch command-line surface for the forecasting library.
//
// Subcommands: synthesize, train, train-ensemble, predict, evaluate,
// size-sweep, robustness, grad-study. Every run directory receives the exact
// config that produced it; outputs are refused without --force when present.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "danet/ensemble.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace danet;

namespace {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // data: a CSV path, or a synthetic spec
  std::string data_path;
  int synthetic_days = 120;
  std::uint64_t synthetic_seed = 7;

  // split: timestamps; empty strings pick the defaults (test = last 30 days,
  // training period = everything before it past the warm-up prefix)
  std::string train_begin, train_end, test_begin, test_end;

  TrainConfig train;
  ModelSpec model;

  int ensemble_members = 5;
  double subsample_fraction = 0.9;

  // study settings
  std::vector<double> sd_grid = {0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.1};
  std::vector<int> depths = {1, 5, 10, 15, 20};
  std::vector<std::string> rules = {"average", "additive", "concat"};
  int grad_width = 128;
  double grad_init_sd = 0.1;
  int max_k = 5;

  std::uint64_t seed = 1;
  std::string raw;  // exact config text for the run directory
};

std::uint64_t parse_u64(const json& v) { return v.get<std::uint64_t>(); }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  std::vector<std::string> bad;
  auto flag = [&](const std::string& field, const std::string& why) {
    bad.push_back(field + " (" + why + ")");
  };

  try {
    if (j.contains("seed")) cfg.seed = parse_u64(j.at("seed"));
    cfg.train.seed = cfg.seed;
    cfg.model.seed = cfg.seed;

    if (j.contains("data")) {
      const json& d = j.at("data");
      if (d.contains("path")) cfg.data_path = d.at("path").get<std::string>();
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        if (s.contains("days")) cfg.synthetic_days = s.at("days").get<int>();
        if (s.contains("seed")) cfg.synthetic_seed = parse_u64(s.at("seed"));
      }
      if (d.contains("path") && d.contains("synthetic"))
        flag("data", "give either path or synthetic, not both");
    }

    if (j.contains("split")) {
      const json& s = j.at("split");
      if (s.contains("train_begin")) cfg.train_begin = s.at("train_begin").get<std::string>();
      if (s.contains("train_end")) cfg.train_end = s.at("train_end").get<std::string>();
      if (s.contains("test_begin")) cfg.test_begin = s.at("test_begin").get<std::string>();
      if (s.contains("test_end")) cfg.test_end = s.at("test_end").get<std::string>();
    }

    if (j.contains("train")) {
      const json& t = j.at("train");
      if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<int>();
      if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
      if (t.contains("init_sd")) cfg.train.init_sd = t.at("init_sd").get<double>();
      if (t.contains("seed")) cfg.train.seed = parse_u64(t.at("seed"));
      if (t.contains("checkpoint")) {
        const std::string c = t.at("checkpoint").get<std::string>();
        if (c == "final") cfg.train.checkpoint = CheckpointPolicy::Final;
        else if (c == "best_validation") cfg.train.checkpoint = CheckpointPolicy::BestValidation;
        else flag("train.checkpoint", "expected final or best_validation");
      }
      if (t.contains("schedule")) {
        const json& s = t.at("schedule");
        if (s.contains("initial_rate"))
          cfg.train.schedule.initial_rate = s.at("initial_rate").get<double>();
        if (s.contains("decay_divisor"))
          cfg.train.schedule.decay_divisor = s.at("decay_divisor").get<double>();
        if (s.contains("step_epochs"))
          cfg.train.schedule.step_epochs = s.at("step_epochs").get<int>();
      }
    }

    if (j.contains("model")) {
      const json& m = j.at("model");
      if (m.contains("combine_rule"))
        cfg.model.combine_rule = combine_rule_from_name(m.at("combine_rule").get<std::string>());
      if (m.contains("block_count")) cfg.model.block_count = m.at("block_count").get<int>();
      if (m.contains("width")) cfg.model.width = m.at("width").get<int>();
      if (m.contains("se_ratio")) cfg.model.se_ratio = m.at("se_ratio").get<int>();
      if (m.contains("kernel_heights"))
        cfg.model.kernel_heights = m.at("kernel_heights").get<std::vector<int>>();
      if (m.contains("seed")) cfg.model.seed = parse_u64(m.at("seed"));
    }

    if (j.contains("ensemble")) {
      const json& e = j.at("ensemble");
      if (e.contains("members")) cfg.ensemble_members = e.at("members").get<int>();
      if (e.contains("subsample_fraction"))
        cfg.subsample_fraction = e.at("subsample_fraction").get<double>();
    }

    if (j.contains("study")) {
      const json& s = j.at("study");
      if (s.contains("sd_grid")) cfg.sd_grid = s.at("sd_grid").get<std::vector<double>>();
      if (s.contains("depths")) cfg.depths = s.at("depths").get<std::vector<int>>();
      if (s.contains("rules")) cfg.rules = s.at("rules").get<std::vector<std::string>>();
      if (s.contains("grad_width")) cfg.grad_width = s.at("grad_width").get<int>();
      if (s.contains("grad_init_sd")) cfg.grad_init_sd = s.at("grad_init_sd").get<double>();
      if (s.contains("max_k")) cfg.max_k = s.at("max_k").get<int>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config field: ") + e.what());
  } catch (const ContractError& e) {  // bad combine rule name
    flag("model.combine_rule", e.what());
  }

  // validate everything at once so a bad config reports all problems together
  if (cfg.data_path.empty() && cfg.synthetic_days < 60)
    flag("data.synthetic.days", "must be at least 60");
  if (cfg.train.epochs < 1) flag("train.epochs", "must be positive");
  if (cfg.train.batch_size < 1) flag("train.batch_size", "must be positive");
  if (!(cfg.train.init_sd > 0)) flag("train.init_sd", "must be positive");
  if (!(cfg.train.schedule.initial_rate > 0))
    flag("train.schedule.initial_rate", "must be positive");
  if (!(cfg.train.schedule.decay_divisor > 0))
    flag("train.schedule.decay_divisor", "must be positive");
  if (cfg.train.schedule.step_epochs < 1) flag("train.schedule.step_epochs", "must be positive");
  if (cfg.model.block_count < 1) flag("model.block_count", "must be positive");
  if (cfg.model.width < 1) flag("model.width", "must be positive");
  if (cfg.model.se_ratio < 1) flag("model.se_ratio", "must be positive");
  if (cfg.model.kernel_heights.empty()) flag("model.kernel_heights", "must be non-empty");
  for (int k : cfg.model.kernel_heights)
    if (k < 1 || k > 48) flag("model.kernel_heights", "entries must be in 1..48");
  if (cfg.ensemble_members < 1) flag("ensemble.members", "must be positive");
  if (!(cfg.subsample_fraction > 0) || cfg.subsample_fraction > 1)
    flag("ensemble.subsample_fraction", "must be in (0, 1]");
  for (double sd : cfg.sd_grid)
    if (sd < 0) flag("study.sd_grid", "entries must be non-negative");
  for (int d : cfg.depths)
    if (d < 1) flag("study.depths", "entries must be positive");
  if (cfg.grad_width < 1) flag("study.grad_width", "must be positive");
  if (!(cfg.grad_init_sd > 0)) flag("study.grad_init_sd", "must be positive");
  if (cfg.max_k < 1) flag("study.max_k", "must be positive");

  if (!bad.empty()) {
    std::string msg = "invalid config fields:";
    for (const std::string& b : bad) msg += "\n  - " + b;
    throw ConfigError(msg);
  }

  cfg.raw = text;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string effective_config_text(const RunConfig& cfg) {
  if (!cfg.raw.empty()) return cfg.raw;
  json j;
  if (!cfg.data_path.empty()) j["data"]["path"] = cfg.data_path;
  else j["data"]["synthetic"] = {{"days", cfg.synthetic_days}, {"seed", cfg.synthetic_seed}};
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

void apply_seed_override(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.train.seed = seed;
  cfg.model.seed = seed;
  // the run directory must reflect what actually ran
  json j = cfg.raw.empty() ? json::object() : json::parse(cfg.raw);
  j["seed"] = seed;
  if (j.contains("train")) j["train"].erase("seed");
  if (j.contains("model")) j["model"].erase("seed");
  cfg.raw = j.dump(2) + "\n";
}

void ensure_writable(const fs::path& out_dir, const std::vector<std::string>& files,
                     bool force) {
  fs::create_directories(out_dir);
  if (force) return;
  for (const std::string& f : files) {
    const fs::path p = out_dir / f;
    if (fs::exists(p))
      throw ConfigError("output file exists: " + p.string() + " (use --force to overwrite)");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::vector<SeriesRow> load_rows(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) return ingest_csv(cfg.data_path);
  return synthesize_series(cfg.synthetic_days, cfg.synthetic_seed);
}

SplitSpec make_split(const RunConfig& cfg, const std::vector<SeriesRow>& rows) {
  const std::int64_t first = rows.front().hour;
  const std::int64_t past = rows.back().hour + 1;
  HourRange test{cfg.test_begin.empty() ? past - 30 * 24 : parse_timestamp(cfg.test_begin),
                 cfg.test_end.empty() ? past : parse_timestamp(cfg.test_end)};
  HourRange train_period{
      cfg.train_begin.empty() ? first + kWarmupHours : parse_timestamp(cfg.train_begin),
      cfg.train_end.empty() ? test.begin : parse_timestamp(cfg.train_end)};
  return SplitSpec::make(train_period, test);
}

std::string loss_csv(const std::vector<EpochLoss>& history) {
  std::string out = "epoch,train,validation\n";
  char line[96];
  for (const EpochLoss& e : history) {
    std::snprintf(line, sizeof line, "%d,%.10g,%.10g\n", e.epoch, e.train, e.validation);
    out += line;
  }
  return out;
}

std::string residuals_csv(const BundleSet& test, const std::vector<double>& residuals) {
  std::string out = "timestamp,residual\n";
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, ",%.10g\n", residuals[i]);
    out += format_timestamp(test.items[i].target_hour) + line;
  }
  return out;
}

struct PreparedData {
  std::vector<SeriesRow> rows;
  SplitSpec split;
  BundleSets sets;
};

PreparedData prepare(const RunConfig& cfg) {
  PreparedData d;
  d.rows = load_rows(cfg);
  d.split = make_split(cfg, d.rows);
  NormStats stats = NormStats::fit(d.rows, d.split.train);
  d.sets = build_bundles(d.rows, d.split, stats);
  return d;
}

/// Rebuilds bundles with the stats a trained model was fitted under, so
/// evaluation of a saved model does not depend on refitting the data.
PreparedData prepare_with_stats(const RunConfig& cfg, const NormStats& stats) {
  PreparedData d;
  d.rows = load_rows(cfg);
  d.split = make_split(cfg, d.rows);
  d.sets = build_bundles(d.rows, d.split, stats);
  return d;
}

std::vector<double> actuals_of(const BundleSet& set) {
  std::vector<double> a;
  a.reserve(set.items.size());
  for (const FeatureBundle& b : set.items) a.push_back(b.target_actual);
  return a;
}

int cmd_synthesize(int days, std::uint64_t seed, const fs::path& out_dir, bool force) {
  ensure_writable(out_dir, {"series.csv", "config.json"}, force);
  RunConfig cfg;
  cfg.synthetic_days = days;
  cfg.synthetic_seed = seed;
  cfg.seed = seed;
  if (days < 60) throw ConfigError("invalid config fields:\n  - days (must be at least 60)");
  write_csv(synthesize_series(days, seed), (out_dir / "series.csv").string());
  write_text(out_dir / "config.json", effective_config_text(cfg));
  std::printf("wrote %s (%d days)\n", (out_dir / "series.csv").c_str(), days);
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  ensure_writable(out_dir, {"config.json", "model.bin", "loss.csv", "manifest.json"}, force);
  PreparedData d = prepare(cfg);
  TrainedModel model = train(d.sets.train, d.sets.validation, cfg.train, cfg.model);
  write_text(out_dir / "config.json", effective_config_text(cfg));
  save_model(model, (out_dir / "model.bin").string());
  write_text(out_dir / "loss.csv", loss_csv(model.history));
  write_text(out_dir / "manifest.json", model.manifest + "\n");
  std::printf("trained %d epochs; final train loss %.6g\n", cfg.train.epochs,
              model.history.back().train);
  return 0;
}

int cmd_train_ensemble(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  std::vector<std::string> outputs = {"config.json", "ensemble.json"};
  for (int i = 1; i <= cfg.ensemble_members; ++i) {
    outputs.push_back("member_" + std::to_string(i) + ".bin");
    outputs.push_back("loss_member_" + std::to_string(i) + ".csv");
  }
  ensure_writable(out_dir, outputs, force);
  PreparedData d = prepare(cfg);
  EnsembleModel ens = train_ensemble(d.sets.train, d.sets.validation, cfg.ensemble_members,
                                     cfg.train, cfg.model, cfg.seed, cfg.subsample_fraction);
  write_text(out_dir / "config.json", effective_config_text(cfg));
  json manifest;
  manifest["members"] = cfg.ensemble_members;
  manifest["subsample_fraction"] = cfg.subsample_fraction;
  manifest["master_seed"] = cfg.seed;
  manifest["member_seeds"] = ens.member_seeds;
  manifest["member_files"] = json::array();
  for (int i = 1; i <= cfg.ensemble_members; ++i) {
    const std::string name = "member_" + std::to_string(i) + ".bin";
    save_model(ens.members[static_cast<std::size_t>(i - 1)], (out_dir / name).string());
    write_text(out_dir / ("loss_member_" + std::to_string(i) + ".csv"),
               loss_csv(ens.members[static_cast<std::size_t>(i - 1)].history));
    manifest["member_files"].push_back(name);
  }
  write_text(out_dir / "ensemble.json", manifest.dump(2) + "\n");
  std::printf("trained %d ensemble members\n", cfg.ensemble_members);
  return 0;
}

EnsembleModel load_ensemble(const fs::path& dir) {
  std::ifstream in(dir / "ensemble.json");
  if (!in) throw IoError("cannot open ensemble manifest: " + (dir / "ensemble.json").string());
  json manifest = json::parse(in, nullptr, /*allow_exceptions=*/true);
  EnsembleModel ens;
  ens.subsample_fraction = manifest.at("subsample_fraction").get<double>();
  ens.member_seeds = manifest.at("member_seeds").get<std::vector<std::uint64_t>>();
  for (const auto& f : manifest.at("member_files"))
    ens.members.push_back(load_model((dir / f.get<std::string>()).string()));
  if (ens.members.empty()) throw IoError("ensemble manifest lists no members");
  return ens;
}

int cmd_predict(const RunConfig& cfg, const std::string& model_path, const fs::path& out_dir,
                bool force) {
  ensure_writable(out_dir, {"config.json", "forecast.csv"}, force);
  TrainedModel model = load_model(model_path);
  PreparedData d = prepare_with_stats(cfg, model.stats);
  std::vector<double> forecasts = predict(model, d.sets.test);
  std::string csv = "timestamp,forecast\n";
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, ",%.10g\n", forecasts[i]);
    csv += format_timestamp(d.sets.test.items[i].target_hour) + line;
  }
  write_text(out_dir / "config.json", effective_config_text(cfg));
  write_text(out_dir / "forecast.csv", csv);
  std::printf("wrote %zu forecasts\n", forecasts.size());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_path,
                 const std::string& ensemble_dir, const fs::path& out_dir, bool force) {
  if (model_path.empty() && ensemble_dir.empty())
    throw ConfigError("evaluate needs --model and/or --ensemble-dir");
  std::vector<std::string> outputs = {"config.json"};
  if (!model_path.empty()) outputs.insert(outputs.end(), {"report.json", "residuals.csv"});
  if (!ensemble_dir.empty())
    outputs.insert(outputs.end(), {"report_ensemble.json", "residuals_ensemble.csv"});
  ensure_writable(out_dir, outputs, force);
  write_text(out_dir / "config.json", effective_config_text(cfg));

  auto report_one = [&](const NormStats& stats, auto&& forecaster, const std::string& suffix) {
    PreparedData d = prepare_with_stats(cfg, stats);
    std::vector<double> forecasts = forecaster(d.sets.test);
    EvaluationReport r = evaluate(forecasts, actuals_of(d.sets.test));
    write_text(out_dir / ("report" + suffix + ".json"), r.to_document() + "\n");
    write_text(out_dir / ("residuals" + suffix + ".csv"), residuals_csv(d.sets.test, r.residuals));
    std::printf("%s: mape %.4f%% mae %.4f rmse %.4f max %.4f sd %.4f (n=%zu)\n",
                suffix.empty() ? "single" : "ensemble", r.mape, r.mae, r.rmse, r.max_abs_bias,
                r.bias_sd, r.n);
  };

  if (!model_path.empty()) {
    TrainedModel model = load_model(model_path);
    report_one(model.stats, [&](const BundleSet& s) { return predict(model, s); }, "");
  }
  if (!ensemble_dir.empty()) {
    EnsembleModel ens = load_ensemble(ensemble_dir);
    report_one(ens.members.front().stats,
               [&](const BundleSet& s) { return predict_ensemble(ens, s); }, "_ensemble");
  }
  return 0;
}

int cmd_size_sweep(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  ensure_writable(out_dir, {"config.json", "sweep.csv", "sweep_long.csv"}, force);
  PreparedData d = prepare(cfg);
  std::vector<SweepRow> rows =
      ensemble_size_sweep(d.sets.train, d.sets.validation, d.sets.test, cfg.max_k, cfg.train,
                          cfg.model, cfg.seed, cfg.subsample_fraction);
  std::string wide = "k,mape,mae,max,sd\n";
  std::string longf = "k,metric,value\n";
  for (const SweepRow& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.10g,%.10g,%.10g,%.10g\n", r.k, r.mape, r.mae,
                  r.max_abs_bias, r.bias_sd);
    wide += line;
    const std::pair<const char*, double> metrics[] = {
        {"mape", r.mape}, {"mae", r.mae}, {"max", r.max_abs_bias}, {"sd", r.bias_sd}};
    for (const auto& [name, value] : metrics) {
      std::snprintf(line, sizeof line, "%d,%s,%.10g\n", r.k, name, value);
      longf += line;
    }
  }
  write_text(out_dir / "config.json", effective_config_text(cfg));
  write_text(out_dir / "sweep.csv", wide);
  write_text(out_dir / "sweep_long.csv", longf);
  std::printf("swept ensemble sizes 1..%d\n", cfg.max_k);
  return 0;
}

int cmd_robustness(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  ensure_writable(out_dir, {"config.json", "robustness.csv"}, force);
  std::vector<SeriesRow> rows = load_rows(cfg);
  SplitSpec split = make_split(cfg, rows);
  std::vector<RobustnessCell> cells =
      robustness_grid(rows, split, cfg.sd_grid, cfg.train, cfg.model, cfg.seed);
  std::string csv = "load_sd,temp_sd,metric,value\n";
  for (const RobustnessCell& c : cells) {
    char line[96];
    std::snprintf(line, sizeof line, "%.10g,%.10g,mape,%.10g\n", c.load_sd, c.temp_sd, c.mape);
    csv += line;
  }
  write_text(out_dir / "config.json", effective_config_text(cfg));
  write_text(out_dir / "robustness.csv", csv);
  std::printf("trained %zu grid cells\n", cells.size());
  return 0;
}

int cmd_grad_study(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  ensure_writable(out_dir, {"config.json", "grad_study.csv"}, force);
  GradientGrowthConfig gcfg;
  gcfg.width = cfg.grad_width;
  gcfg.init_sd = cfg.grad_init_sd;
  gcfg.seed = cfg.seed;
  std::string csv = "rule,depth,input_grad_norm,param_count\n";
  for (const std::string& rule : cfg.rules) {
    std::vector<GradientGrowthRow> rows =
        gradient_growth_study(combine_rule_from_name(rule), cfg.depths, gcfg);
    for (const GradientGrowthRow& r : rows) {
      char line[128];
      std::snprintf(line, sizeof line, "%s,%d,%.10g,%zu\n", rule.c_str(), r.depth,
                    r.input_grad_norm, r.param_count);
      csv += line;
    }
  }
  write_text(out_dir / "config.json", effective_config_text(cfg));
  write_text(out_dir / "grad_study.csv", csv);
  std::printf("studied %zu rules x %zu depths\n", cfg.rules.size(), cfg.depths.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"danet: short-term load forecasting pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run", model_path, ensemble_dir;
  std::uint64_t seed = 0;
  bool seed_given = false, force = false;
  int days = 120;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "run config file (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed override")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_flag("--force", force, "overwrite existing outputs");
    return sub;
  };

  CLI::App* synth = add_common(app.add_subcommand("synthesize", "generate a synthetic series"),
                               false);
  synth->add_option("--days", days, "number of days to generate");
  CLI::App* train_cmd = add_common(app.add_subcommand("train", "train a single model"), true);
  CLI::App* ens_cmd =
      add_common(app.add_subcommand("train-ensemble", "train a bagging ensemble"), true);
  CLI::App* predict_cmd =
      add_common(app.add_subcommand("predict", "forecast the test range"), true);
  predict_cmd->add_option("--model", model_path, "trained model file")->required();
  CLI::App* eval_cmd =
      add_common(app.add_subcommand("evaluate", "score forecasts on the test range"), true);
  eval_cmd->add_option("--model", model_path, "trained model file");
  eval_cmd->add_option("--ensemble-dir", ensemble_dir, "directory from train-ensemble");
  CLI::App* sweep_cmd =
      add_common(app.add_subcommand("size-sweep", "ensemble size study"), true);
  CLI::App* robust_cmd =
      add_common(app.add_subcommand("robustness", "noise robustness grid"), true);
  CLI::App* grad_cmd =
      add_common(app.add_subcommand("grad-study", "gradient growth by depth"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_given) apply_seed_override(cfg, seed);
    const fs::path out(out_dir);

    if (synth->parsed())
      return cmd_synthesize(days, seed_given ? seed : cfg.synthetic_seed, out, force);
    if (train_cmd->parsed()) return cmd_train(cfg, out, force);
    if (ens_cmd->parsed()) return cmd_train_ensemble(cfg, out, force);
    if (predict_cmd->parsed()) return cmd_predict(cfg, model_path, out, force);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, model_path, ensemble_dir, out, force);
    if (sweep_cmd->parsed()) return cmd_size_sweep(cfg, out, force);
    if (robust_cmd->parsed()) return cmd_robustness(cfg, out, force);
    if (grad_cmd->parsed()) return cmd_grad_study(cfg, out, force);
    std::fprintf(stderr, "error: no subcommand\n");
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const IngestError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const TrainError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
