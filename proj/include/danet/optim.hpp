#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "danet/tensor.hpp"

namespace danet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Stepped decay: rate(epoch) = initial / divisor^floor(epoch / step_epochs).
struct LrSchedule {
  double initial_rate = 1e-3;
  double decay_divisor = 10.0;
  int step_epochs = 600;

  double rate(int epoch) const;
};

/// Named trainable tensors with per-entry Adam moments and a shared step count.
/// Entry order is fixed at insertion and defines the gradient alignment for
/// adam_step().
class ParameterStore {
public:
  std::size_t add(const std::string& name, Tensor init);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::int64_t step() const { return step_; }

  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& value(std::size_t i) { return entries_[i].value; }
  const Tensor& value(std::size_t i) const { return entries_[i].value; }
  const Tensor& value(const std::string& name) const;
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  /// Standard Adam update; grads must align one-to-one with entries.
  void adam_step(const std::vector<Tensor>& grads, double rate, const AdamConfig& cfg = {});

  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& values);

private:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m;
    Tensor v;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

/// Samples N(mean, sd^2) rejecting draws outside mean +/- trunc_sds * sd.
Tensor truncated_normal(Shape shape, double mean, double sd, std::uint64_t seed,
                        double trunc_sds = 2.0);

}  // namespace danet
