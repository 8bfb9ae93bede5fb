#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "danet/graph.hpp"
#include "danet/optim.hpp"

namespace danet {

/// How a layer's fresh output is combined with the outputs of all preceding
/// layers. None disables combining (plain feed-forward chain, the ablation
/// baseline).
enum class CombineRule { Concat, Additive, Average, None };

std::string combine_rule_name(CombineRule rule);
CombineRule combine_rule_from_name(const std::string& name);

/// history holds x_0..x_{l-1} in order, fresh is H_l(x_{l-1}).
///   average  -> (fresh + sum(history)) / (|history| + 1)
///   additive -> fresh + sum(history)
///   concat   -> [history..., fresh] along the last axis
Graph::NodeId combine(Graph& g, CombineRule rule, const std::vector<Graph::NodeId>& history,
                      Graph::NodeId fresh);

struct ModelSpec {
  CombineRule combine_rule = CombineRule::Average;
  int block_count = 5;
  int width = 128;
  int se_ratio = 16;
  std::vector<int> kernel_heights = {1, 2, 3, 4};
  std::uint64_t seed = 0;

  std::string to_document() const;
  static ModelSpec from_document(const std::string& doc);
};

/// Fixed input contract: 48-hour lookback windows.
struct InputDims {
  static constexpr std::size_t lookback = 48;
  static constexpr std::size_t ls_cols = 2;  // [slope, load] pairs
  static constexpr std::size_t weekday = 7;
  static constexpr std::size_t month = 12;
  static constexpr std::size_t calendar = weekday + month;
};

struct BatchInputs {
  Tensor ls;           // [N, 48, 2, 1]
  Tensor temperature;  // [N, 48]
  Tensor calendar;     // [N, 19] = weekday one-hot ++ month one-hot
};

/// Builds and runs the forecasting network: four convolution branches with
/// per-branch squeeze-and-excitation and global average pooling, a
/// temperature branch, a calendar branch, a merge layer, a stack of
/// dense-average blocks, and a linear output.
class ForecastNet {
public:
  explicit ForecastNet(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }

  /// Registers every parameter in canonical order, initialized from a
  /// 2-sigma truncated normal seeded by spec.seed.
  void init_params(ParameterStore& store, double init_sd) const;

  /// Builds the forward pass for one batch. param_nodes, when given, receives
  /// graph node ids aligned with store entry order.
  Graph::NodeId forward(Graph& g, const BatchInputs& in, const ParameterStore& store,
                        std::vector<Graph::NodeId>* param_nodes = nullptr) const;

  std::size_t se_hidden_width() const;

private:
  ModelSpec spec_;
  std::vector<std::pair<std::string, Shape>> layout_;  // canonical parameter layout
};

/// Squeeze-and-excitation: pool over H,W, reduce (ReLU), expand (sigmoid),
/// rescale channels of the input.
Graph::NodeId se_block(Graph& g, Graph::NodeId features, Graph::NodeId reduce_w,
                       Graph::NodeId reduce_b, Graph::NodeId expand_w, Graph::NodeId expand_b);

/// Four affine+ReLU layers chained under the given combine rule; the
/// averaging history resets at block entry (block input counts as x_0).
Graph::NodeId dense_average_block(Graph& g, Graph::NodeId x0, CombineRule rule,
                                  const std::vector<Graph::NodeId>& weights,
                                  const std::vector<Graph::NodeId>& biases);

/// Hidden-layer count excluding input and output layers (SE internals and
/// pooling uncounted): conv stage + merge + 4 per block.
int hidden_depth(const ModelSpec& spec);

struct GradientGrowthRow {
  int depth;
  double input_grad_norm;
  std::size_t param_count;
};

struct GradientGrowthConfig {
  int width = 128;
  double init_sd = 0.1;
  std::uint64_t seed = 0;
};

/// Builds width-wide stacks of affine+ReLU layers under the rule, runs one
/// backward pass from an MAE loss on a fixed random input, and reports the
/// L2 norm of the gradient at the stack input per depth.
std::vector<GradientGrowthRow> gradient_growth_study(CombineRule rule,
                                                     const std::vector<int>& depths,
                                                     const GradientGrowthConfig& cfg);

}  // namespace danet
