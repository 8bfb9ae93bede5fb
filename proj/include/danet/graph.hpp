#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "danet/tensor.hpp"

namespace danet {

enum class OpKind {
  Input,
  Parameter,
  Add,
  Sub,
  Mul,
  AddBias,       // x[..., M] + b[M]
  MatMul,        // [N,K] x [K,M]
  Relu,
  Sigmoid,
  Scale,         // x * constant
  Conv2dValid,   // x[(N,)H,W,Cin] * k[kh,kw,Cin,Cout], stride 1, no padding
  GlobalAvgPool, // [(N,)H,W,C] -> [(N,)C]
  ChannelScale,  // x[N,H,W,C] .* s[N,C] broadcast over H,W
  ConcatLast,    // concat along last axis
  Reshape,
  Sum,
  Mean,
  MeanAbsErr,    // mean |a - b|, subgradient 0 at ties
};

/// Single-threaded computation tape. Values are evaluated eagerly at node
/// creation; backward() fills gradients in reverse tape order. Nodes never
/// reached from the loss keep a zero gradient.
class Graph {
public:
  using NodeId = std::int32_t;

  NodeId input(Tensor value);
  NodeId parameter(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId add_bias(NodeId x, NodeId bias);
  NodeId matmul(NodeId a, NodeId b);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId conv2d_valid(NodeId x, NodeId kernels);
  NodeId global_avg_pool(NodeId x);
  NodeId channel_scale(NodeId x, NodeId weights);
  NodeId concat_last(const std::vector<NodeId>& parts);
  NodeId reshape(NodeId x, Shape target);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId mean_abs_err(NodeId a, NodeId b);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  OpKind kind(NodeId id) const { return nodes_[id].kind; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss node.
  void backward(NodeId loss);

  /// Gradient of the last backward() loss w.r.t. this node (zeros if the
  /// node does not reach the loss).
  const Tensor& grad(NodeId id);

private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    double aux = 0.0;
  };

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value, double aux = 0.0);
  Tensor eval(OpKind kind, const std::vector<NodeId>& inputs, double aux) const;
  void propagate(const Node& node);
  Tensor& grad_buffer(NodeId id);

  std::deque<Node> nodes_;  // deque keeps value() references stable across node creation
};

}  // namespace danet
