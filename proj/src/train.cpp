#include "danet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"

namespace danet {

namespace {

using nlohmann::json;

// Training churns through multi-megabyte activation buffers every batch. With
// glibc defaults those cross the mmap threshold, so each one costs a fresh
// mmap/munmap plus page faults; keeping them in the arena roughly halves
// epoch time on one core.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

constexpr char kMagic[8] = {'D', 'A', 'N', 'E', 'T', 'M', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

double forward_loss(const ForecastNet& net, const ParameterStore& store,
                    const std::vector<FeatureBundle>& items, int batch_size) {
  double acc = 0;
  std::vector<std::size_t> idx;
  for (std::size_t at = 0; at < items.size(); at += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, items.size() - at);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), at);
    Graph g;
    Graph::NodeId pred = net.forward(g, to_batch(items, idx), store);
    Graph::NodeId target = g.input(batch_targets(items, idx));
    acc += g.value(g.mean_abs_err(pred, target))[0] * static_cast<double>(n);
  }
  return acc / static_cast<double>(items.size());
}

}  // namespace

Graph::NodeId mae_loss(Graph& g, Graph::NodeId pred, Graph::NodeId target) {
  return g.mean_abs_err(pred, target);
}

TrainedModel train(const BundleSet& train_set, const BundleSet& validation,
                   const TrainConfig& cfg, const ModelSpec& spec) {
  if (cfg.epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (train_set.items.empty()) throw ContractError("train: no training bundles");
  const bool has_val = !validation.items.empty();
  if (has_val && !(validation.stats == train_set.stats))
    throw ContractError("train: validation bundles use different normalization statistics");
  if (cfg.checkpoint == CheckpointPolicy::BestValidation && !has_val)
    throw ContractError("train: best-validation checkpointing needs a validation set");
  tune_allocator();

  ForecastNet net(spec);
  ParameterStore store;
  net.init_params(store, cfg.init_sd);

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5f5fULL);
  std::vector<std::size_t> order(train_set.items.size());
  std::iota(order.begin(), order.end(), 0);

  TrainedModel model;
  model.spec = spec;
  model.stats = train_set.stats;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_snapshot;

  std::vector<std::size_t> idx;
  std::vector<Tensor> grads(store.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.rate(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - at);
      idx.assign(order.begin() + at, order.begin() + at + n);
      Graph g;
      std::vector<Graph::NodeId> pids;
      Graph::NodeId pred = net.forward(g, to_batch(train_set.items, idx), store, &pids);
      Graph::NodeId target = g.input(batch_targets(train_set.items, idx));
      Graph::NodeId loss = mae_loss(g, pred, target);
      const double loss_v = g.value(loss)[0];
      if (!std::isfinite(loss_v))
        throw TrainError("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch));
      epoch_loss += loss_v * static_cast<double>(n);
      g.backward(loss);
      for (std::size_t i = 0; i < pids.size(); ++i) grads[i] = g.grad(pids[i]);
      store.adam_step(grads, lr, cfg.adam);
    }
    epoch_loss /= static_cast<double>(order.size());
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (has_val) {
      val_loss = forward_loss(net, store, validation.items, cfg.batch_size);
      if (val_loss < best_val) {
        best_val = val_loss;
        if (cfg.checkpoint == CheckpointPolicy::BestValidation)
          best_snapshot = store.snapshot_values();
      }
    }
    model.history.push_back({epoch, epoch_loss, val_loss});
  }
  if (cfg.checkpoint == CheckpointPolicy::BestValidation && !best_snapshot.empty())
    store.restore_values(best_snapshot);
  model.params = std::move(store);

  json manifest;
  manifest["spec"] = json::parse(spec.to_document());
  manifest["config"] = {{"batch_size", cfg.batch_size},
                        {"epochs", cfg.epochs},
                        {"initial_lr", cfg.schedule.initial_rate},
                        {"lr_divisor", cfg.schedule.decay_divisor},
                        {"lr_step", cfg.schedule.step_epochs},
                        {"seed", cfg.seed},
                        {"init_sd", cfg.init_sd},
                        {"checkpoint", cfg.checkpoint == CheckpointPolicy::Final
                                           ? "final"
                                           : "best-validation"}};
  manifest["data"] = {
      {"train_bundles", train_set.items.size()},
      {"validation_bundles", validation.items.size()},
      {"train_first_hour",
       train_set.items.empty() ? "" : format_timestamp(train_set.items.front().target_hour)},
      {"train_last_hour",
       train_set.items.empty() ? "" : format_timestamp(train_set.items.back().target_hour)}};
  manifest["final_train_loss"] = model.history.back().train;
  if (has_val) manifest["final_validation_loss"] = model.history.back().validation;
  model.manifest = manifest.dump(2);
  return model;
}

std::vector<double> predict(const TrainedModel& model, const BundleSet& set) {
  if (!(set.stats == model.stats))
    throw ContractError("predict: bundles were built with different normalization statistics");
  tune_allocator();
  ForecastNet net(model.spec);
  std::vector<double> out;
  out.reserve(set.items.size());
  std::vector<std::size_t> idx;
  constexpr std::size_t kChunk = 512;
  for (std::size_t at = 0; at < set.items.size(); at += kChunk) {
    const std::size_t n = std::min(kChunk, set.items.size() - at);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), at);
    Graph g;
    Graph::NodeId pred = net.forward(g, to_batch(set.items, idx), model.params);
    const Tensor& v = g.value(pred);
    for (std::size_t i = 0; i < n; ++i) out.push_back(model.stats.denorm_load(v[i]));
  }
  return out;
}

void save_model(const TrainedModel& model, const std::string& path) {
  json header;
  header["version"] = kFormatVersion;
  header["spec"] = json::parse(model.spec.to_document());
  header["stats"] = {{"load_mean", model.stats.load_mean},
                     {"load_sd", model.stats.load_sd},
                     {"temp_mean", model.stats.temp_mean},
                     {"temp_sd", model.stats.temp_sd}};
  header["manifest"] = model.manifest;
  json params = json::array();
  std::size_t payload = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    params.push_back({{"name", model.params.name(i)}, {"shape", model.params.value(i).shape}});
    payload += model.params.value(i).size();
  }
  header["params"] = params;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, 8);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  // payload is little-endian doubles; this writes native order (x86).
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const Tensor& t = model.params.value(i);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path + ": not a model file");
  std::uint64_t hlen = 0;
  if (!in.read(reinterpret_cast<char*>(&hlen), 8))
    throw IoError(path + ": corrupt model file (truncated header length)");
  std::string hs(hlen, '\0');
  if (!in.read(hs.data(), static_cast<std::streamsize>(hlen)))
    throw IoError(path + ": corrupt model file (truncated header)");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception&) {
    throw IoError(path + ": corrupt model file (bad header)");
  }
  if (header.at("version").get<std::uint32_t>() != kFormatVersion)
    throw IoError(path + ": unsupported model file version");

  TrainedModel model;
  model.spec = ModelSpec::from_document(header.at("spec").dump());
  const json& st = header.at("stats");
  model.stats.load_mean = st.at("load_mean").get<double>();
  model.stats.load_sd = st.at("load_sd").get<double>();
  model.stats.temp_mean = st.at("temp_mean").get<double>();
  model.stats.temp_sd = st.at("temp_sd").get<double>();
  model.manifest = header.at("manifest").get<std::string>();
  for (const json& p : header.at("params")) {
    Shape shape = p.at("shape").get<Shape>();
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw IoError(path + ": corrupt model file (truncated payload)");
    model.params.add(p.at("name").get<std::string>(), std::move(t));
  }
  return model;
}

}  // namespace danet
