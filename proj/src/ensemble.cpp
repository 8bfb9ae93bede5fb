#include "danet/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace danet {

std::string EvaluationReport::to_document() const {
  nlohmann::json j;
  j["mape"] = mape;
  j["mae"] = mae;
  j["rmse"] = rmse;
  j["max_abs_bias"] = max_abs_bias;
  j["bias_sd"] = bias_sd;
  j["n"] = n;
  return j.dump(2);
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (fraction <= 0 || fraction > 1)
    throw ContractError("subsample_indices: fraction must be in (0,1]");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  all.resize(std::max<std::size_t>(m, 1));
  std::sort(all.begin(), all.end());
  return all;
}

EnsembleModel train_ensemble(const BundleSet& train_set, const BundleSet& validation, int k,
                             const TrainConfig& cfg, const ModelSpec& spec,
                             std::uint64_t master_seed, double subsample_fraction) {
  if (k < 1) throw ContractError("train_ensemble: member count must be >= 1");
  EnsembleModel ens;
  ens.subsample_fraction = subsample_fraction;
  for (int i = 1; i <= k; ++i) {
    const std::uint64_t member_seed = master_seed ^ static_cast<std::uint64_t>(i);
    ens.member_seeds.push_back(member_seed);
    BundleSet sub;
    sub.stats = train_set.stats;
    for (std::size_t idx :
         subsample_indices(train_set.items.size(), subsample_fraction, member_seed * 0x9e37ULL + 1))
      sub.items.push_back(train_set.items[idx]);
    TrainConfig mcfg = cfg;
    mcfg.seed = member_seed;
    ModelSpec mspec = spec;
    mspec.seed = member_seed;
    ens.members.push_back(train(sub, validation, mcfg, mspec));
  }
  return ens;
}

std::vector<double> predict_ensemble(const EnsembleModel& ens, const BundleSet& set) {
  if (ens.members.empty()) throw ContractError("predict_ensemble: no members");
  std::vector<double> acc(set.items.size(), 0.0);
  for (const TrainedModel& m : ens.members) {
    std::vector<double> p = predict(m, set);
    for (std::size_t i = 0; i < p.size(); ++i) acc[i] += p[i];
  }
  const double inv = 1.0 / static_cast<double>(ens.members.size());
  for (double& v : acc) v *= inv;
  return acc;
}

EvaluationReport evaluate(const std::vector<double>& forecasts,
                          const std::vector<double>& actuals) {
  if (forecasts.size() != actuals.size())
    throw ContractError("evaluate: forecast count " + std::to_string(forecasts.size()) +
                        " != actual count " + std::to_string(actuals.size()));
  if (forecasts.empty()) throw ContractError("evaluate: empty input");
  std::vector<std::size_t> zero_idx;
  for (std::size_t i = 0; i < actuals.size(); ++i)
    if (actuals[i] == 0.0) zero_idx.push_back(i);
  if (!zero_idx.empty()) {
    std::ostringstream msg;
    msg << "evaluate: MAPE undefined, zero actual load at indices";
    for (std::size_t i : zero_idx) msg << " " << i;
    throw ContractError(msg.str());
  }
  EvaluationReport r;
  r.n = forecasts.size();
  r.residuals.resize(r.n);
  double abs_sum = 0, sq_sum = 0, pct_sum = 0, res_sum = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double res = forecasts[i] - actuals[i];
    r.residuals[i] = res;
    abs_sum += std::fabs(res);
    sq_sum += res * res;
    pct_sum += std::fabs(res / actuals[i]);
    res_sum += res;
    r.max_abs_bias = std::max(r.max_abs_bias, std::fabs(res));
  }
  const double nn = static_cast<double>(r.n);
  r.mae = abs_sum / nn;
  r.rmse = std::sqrt(sq_sum / nn);
  r.mape = pct_sum / nn * 100.0;
  const double mean_res = res_sum / nn;
  double var = 0;
  for (double res : r.residuals) var += (res - mean_res) * (res - mean_res);
  r.bias_sd = std::sqrt(var / nn);
  return r;
}

VarianceDiagnostics variance_diagnostics(const std::vector<std::vector<double>>& member_errors) {
  const int k = static_cast<int>(member_errors.size());
  if (k < 2) throw ContractError("variance_diagnostics: need at least 2 members");
  const std::size_t n = member_errors[0].size();
  for (const auto& e : member_errors)
    if (e.size() != n)
      throw ContractError("variance_diagnostics: members disagree on sample count");
  if (n == 0) throw ContractError("variance_diagnostics: empty sample set");

  VarianceDiagnostics d;
  d.k = k;
  d.n = n;
  const double nn = static_cast<double>(n);
  for (int i = 0; i < k; ++i) {
    double acc = 0;
    for (double e : member_errors[i]) acc += e * e;
    d.v += acc / nn;
  }
  d.v /= static_cast<double>(k);
  int pairs = 0;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      double acc = 0;
      for (std::size_t s = 0; s < n; ++s) acc += member_errors[i][s] * member_errors[j][s];
      d.c += acc / nn;
      ++pairs;
    }
  d.c /= static_cast<double>(pairs);
  d.predicted_mse = d.v / k + static_cast<double>(k - 1) / k * d.c;
  double obs = 0;
  for (std::size_t s = 0; s < n; ++s) {
    double mean_e = 0;
    for (int i = 0; i < k; ++i) mean_e += member_errors[i][s];
    mean_e /= static_cast<double>(k);
    obs += mean_e * mean_e;
  }
  d.observed_mse = obs / nn;
  return d;
}

std::vector<SweepRow> ensemble_size_sweep(const BundleSet& train_set,
                                          const BundleSet& validation, const BundleSet& test,
                                          int max_k, const TrainConfig& cfg,
                                          const ModelSpec& spec, std::uint64_t master_seed,
                                          double subsample_fraction) {
  if (max_k < 1) throw ContractError("ensemble_size_sweep: max_k must be >= 1");
  EnsembleModel ens =
      train_ensemble(train_set, validation, max_k, cfg, spec, master_seed, subsample_fraction);
  std::vector<double> actuals;
  for (const FeatureBundle& b : test.items) actuals.push_back(b.target_actual);

  std::vector<std::vector<double>> member_preds;
  for (const TrainedModel& m : ens.members) member_preds.push_back(predict(m, test));

  std::vector<SweepRow> rows;
  std::vector<double> acc(test.items.size(), 0.0);
  for (int k = 1; k <= max_k; ++k) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += member_preds[k - 1][i];
    std::vector<double> mean(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) mean[i] = acc[i] / static_cast<double>(k);
    EvaluationReport r = evaluate(mean, actuals);
    rows.push_back({k, r.mape, r.mae, r.max_abs_bias, r.bias_sd});
  }
  return rows;
}

std::vector<RobustnessCell> robustness_grid(const std::vector<SeriesRow>& rows,
                                            const SplitSpec& split,
                                            const std::vector<double>& sd_grid,
                                            const TrainConfig& cfg, const ModelSpec& spec,
                                            std::uint64_t seed) {
  for (double sd : sd_grid)
    if (sd < 0) throw ContractError("robustness_grid: noise sd must be >= 0");
  // Noise goes on the whole original training period (fit + validation tail).
  const HourRange train_period{split.train.begin, split.validation.end};
  std::vector<RobustnessCell> cells;
  std::vector<double> actuals;
  for (double load_sd : sd_grid)
    for (double temp_sd : sd_grid) {
      std::vector<SeriesRow> prows = perturb_training(rows, load_sd, temp_sd, seed, train_period);
      NormStats stats = NormStats::fit(prows, split.train);
      BundleSets sets = build_bundles(prows, split, stats);
      TrainedModel model = train(sets.train, sets.validation, cfg, spec);
      std::vector<double> preds = predict(model, sets.test);
      if (actuals.empty())
        for (const FeatureBundle& b : sets.test.items) actuals.push_back(b.target_actual);
      EvaluationReport r = evaluate(preds, actuals);
      cells.push_back({load_sd, temp_sd, r.mape});
    }
  return cells;
}

}  // namespace danet
