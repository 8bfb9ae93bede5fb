#include "danet/optim.hpp"

#include <cmath>
#include <random>

namespace danet {

double LrSchedule::rate(int epoch) const {
  if (epoch < 0) throw ContractError("LrSchedule: negative epoch");
  const int steps = epoch / step_epochs;
  return initial_rate / std::pow(decay_divisor, steps);
}

std::size_t ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ContractError("ParameterStore: duplicate entry " + name);
  Entry e;
  e.name = name;
  e.m = Tensor::zeros(init.shape);
  e.v = Tensor::zeros(init.shape);
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  index_[name] = entries_.size() - 1;
  return entries_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

std::size_t ParameterStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParameterStore: no entry " + name);
  return it->second;
}

const Tensor& ParameterStore::value(const std::string& name) const {
  return entries_[index(name)].value;
}

void ParameterStore::adam_step(const std::vector<Tensor>& grads, double rate,
                               const AdamConfig& cfg) {
  if (grads.size() != entries_.size())
    throw ContractError("adam_step: got " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(entries_.size()) + " parameters");
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!grads[i].same_shape(entries_[i].value))
      throw ContractError("adam_step: gradient shape " + shape_str(grads[i].shape) +
                          " does not match parameter " + entries_[i].name + " " +
                          shape_str(entries_[i].value.shape));
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Entry& e = entries_[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      e.m[j] = cfg.beta1 * e.m[j] + (1.0 - cfg.beta1) * g[j];
      e.v[j] = cfg.beta2 * e.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = e.m[j] / c1;
      const double vhat = e.v[j] / c2;
      e.value[j] -= rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

std::vector<Tensor> ParameterStore::snapshot_values() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.value);
  return out;
}

void ParameterStore::restore_values(const std::vector<Tensor>& values) {
  if (values.size() != entries_.size())
    throw ContractError("restore_values: entry count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!values[i].same_shape(entries_[i].value))
      throw ContractError("restore_values: shape mismatch at " + entries_[i].name);
    entries_[i].value = values[i];
  }
}

Tensor truncated_normal(Shape shape, double mean, double sd, std::uint64_t seed,
                        double trunc_sds) {
  if (sd <= 0.0) throw ContractError("truncated_normal: sd must be positive");
  Tensor out(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(mean, sd);
  const double lo = mean - trunc_sds * sd;
  const double hi = mean + trunc_sds * sd;
  for (double& v : out.data) {
    double x;
    do {
      x = dist(rng);
    } while (x < lo || x > hi);
    v = x;
  }
  return out;
}

}  // namespace danet
