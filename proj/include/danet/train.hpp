#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "danet/data.hpp"
#include "danet/model.hpp"
#include "danet/optim.hpp"

namespace danet {

class TrainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointPolicy { Final, BestValidation };

struct TrainConfig {
  int batch_size = 256;
  int epochs = 1200;
  LrSchedule schedule{1e-3, 10.0, 600};
  std::uint64_t seed = 0;  // shuffling; parameter init is seeded by ModelSpec::seed
  double init_sd = 1.0;
  CheckpointPolicy checkpoint = CheckpointPolicy::Final;
  AdamConfig adam;
};

struct EpochLoss {
  int epoch;
  double train;
  double validation;  // NaN when no validation set was given
};

struct TrainedModel {
  ModelSpec spec;
  ParameterStore params;
  NormStats stats;
  std::string manifest;  // JSON: config, data ranges, seed, final losses
  std::vector<EpochLoss> history;
};

/// MAE between prediction and target nodes (normalized units in training).
Graph::NodeId mae_loss(Graph& g, Graph::NodeId pred, Graph::NodeId target);

/// One full pass over the training bundles per epoch, shuffled mini-batches
/// with the last partial batch kept, Adam with the stepped schedule.
TrainedModel train(const BundleSet& train_set, const BundleSet& validation,
                   const TrainConfig& cfg, const ModelSpec& spec);

/// Denormalized forecasts, one per bundle. The set must have been built with
/// the model's normalization statistics.
std::vector<double> predict(const TrainedModel& model, const BundleSet& set);

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace danet
