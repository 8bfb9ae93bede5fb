#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "danet/train.hpp"

namespace danet {

struct EnsembleModel {
  std::vector<TrainedModel> members;
  double subsample_fraction = 0.9;
  std::vector<std::uint64_t> member_seeds;
};

struct EvaluationReport {
  double mape = 0;          // percent
  double mae = 0;           // megawatts
  double rmse = 0;          // megawatts
  double max_abs_bias = 0;  // largest |residual|
  double bias_sd = 0;       // standard deviation of residuals
  std::size_t n = 0;
  std::vector<double> residuals;  // forecast - actual, per hour

  std::string to_document() const;
};

/// Empirical form of the bagging error decomposition: v is the mean
/// per-member squared error, c the mean pairwise error product, and the
/// predicted ensemble MSE is v/k + (k-1)c/k.
struct VarianceDiagnostics {
  double v = 0;
  double c = 0;
  double predicted_mse = 0;
  double observed_mse = 0;
  int k = 0;
  std::size_t n = 0;
};

/// floor(fraction*n) distinct indices, uniform without replacement.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);

/// k members, each trained on an independent 90% subsample with a derived
/// seed (member i uses master_seed XOR i, 1-based).
EnsembleModel train_ensemble(const BundleSet& train_set, const BundleSet& validation, int k,
                             const TrainConfig& cfg, const ModelSpec& spec,
                             std::uint64_t master_seed, double subsample_fraction = 0.9);

/// Unweighted mean of member forecasts.
std::vector<double> predict_ensemble(const EnsembleModel& ens, const BundleSet& set);

EvaluationReport evaluate(const std::vector<double>& forecasts,
                          const std::vector<double>& actuals);

VarianceDiagnostics variance_diagnostics(const std::vector<std::vector<double>>& member_errors);

struct SweepRow {
  int k;
  double mape;
  double mae;
  double max_abs_bias;
  double bias_sd;
};

/// Nested design: the size-k row averages the first k of max_k trained
/// members, so rows differ only in ensemble size.
std::vector<SweepRow> ensemble_size_sweep(const BundleSet& train_set,
                                          const BundleSet& validation, const BundleSet& test,
                                          int max_k, const TrainConfig& cfg,
                                          const ModelSpec& spec, std::uint64_t master_seed,
                                          double subsample_fraction = 0.9);

struct RobustnessCell {
  double load_sd;
  double temp_sd;
  double mape;
};

/// One model per (load-sd, temp-sd) cell, trained on perturbed training rows
/// with identical seeds across cells, evaluated on the clean test range.
std::vector<RobustnessCell> robustness_grid(const std::vector<SeriesRow>& rows,
                                            const SplitSpec& split,
                                            const std::vector<double>& sd_grid,
                                            const TrainConfig& cfg, const ModelSpec& spec,
                                            std::uint64_t seed);

}  // namespace danet
