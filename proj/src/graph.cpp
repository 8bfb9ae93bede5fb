#include "danet/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace danet {


namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Interprets a tensor of rank 3 or 4 as batched feature maps [N,H,W,C].
struct MapDims {
  std::size_t n, h, w, c;
};

MapDims feature_dims(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {1, t.shape[0], t.shape[1], t.shape[2]};
  if (t.rank() == 4) return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
  throw ShapeError(std::string(what) + ": expected rank 3 or 4 feature map, got " +
                   shape_str(t.shape));
}

std::size_t last_extent(const Tensor& t) { return t.shape.back(); }

}  // namespace

Graph::NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, Tensor value, double aux) {
  Node node;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.aux = aux;
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::input(Tensor value) {
  if (!value.all_finite()) throw NumericError("input tensor contains non-finite values");
  return push(OpKind::Input, {}, std::move(value));
}

Graph::NodeId Graph::parameter(Tensor value) {
  if (!value.all_finite()) throw NumericError("parameter tensor contains non-finite values");
  return push(OpKind::Parameter, {}, std::move(value));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  return push(OpKind::Add, {a, b}, eval(OpKind::Add, {a, b}, 0));
}
Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  return push(OpKind::Sub, {a, b}, eval(OpKind::Sub, {a, b}, 0));
}
Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  return push(OpKind::Mul, {a, b}, eval(OpKind::Mul, {a, b}, 0));
}
Graph::NodeId Graph::add_bias(NodeId x, NodeId bias) {
  return push(OpKind::AddBias, {x, bias}, eval(OpKind::AddBias, {x, bias}, 0));
}
Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  return push(OpKind::MatMul, {a, b}, eval(OpKind::MatMul, {a, b}, 0));
}
Graph::NodeId Graph::relu(NodeId x) { return push(OpKind::Relu, {x}, eval(OpKind::Relu, {x}, 0)); }
Graph::NodeId Graph::sigmoid(NodeId x) {
  return push(OpKind::Sigmoid, {x}, eval(OpKind::Sigmoid, {x}, 0));
}
Graph::NodeId Graph::scale(NodeId x, double factor) {
  return push(OpKind::Scale, {x}, eval(OpKind::Scale, {x}, factor), factor);
}
Graph::NodeId Graph::conv2d_valid(NodeId x, NodeId kernels) {
  return push(OpKind::Conv2dValid, {x, kernels}, eval(OpKind::Conv2dValid, {x, kernels}, 0));
}
Graph::NodeId Graph::global_avg_pool(NodeId x) {
  return push(OpKind::GlobalAvgPool, {x}, eval(OpKind::GlobalAvgPool, {x}, 0));
}
Graph::NodeId Graph::channel_scale(NodeId x, NodeId weights) {
  return push(OpKind::ChannelScale, {x, weights}, eval(OpKind::ChannelScale, {x, weights}, 0));
}
Graph::NodeId Graph::concat_last(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ContractError("concat_last: no inputs");
  return push(OpKind::ConcatLast, parts, eval(OpKind::ConcatLast, parts, 0));
}
Graph::NodeId Graph::reshape(NodeId x, Shape target) {
  const Tensor& v = nodes_[x].value;
  if (shape_numel(target) != v.size())
    throw ShapeError("reshape: cannot view " + shape_str(v.shape) + " as " + shape_str(target));
  Tensor out(std::move(target), v.data);
  return push(OpKind::Reshape, {x}, std::move(out));
}
Graph::NodeId Graph::sum(NodeId x) { return push(OpKind::Sum, {x}, eval(OpKind::Sum, {x}, 0)); }
Graph::NodeId Graph::mean(NodeId x) { return push(OpKind::Mean, {x}, eval(OpKind::Mean, {x}, 0)); }
Graph::NodeId Graph::mean_abs_err(NodeId a, NodeId b) {
  return push(OpKind::MeanAbsErr, {a, b}, eval(OpKind::MeanAbsErr, {a, b}, 0));
}

Tensor Graph::eval(OpKind kind, const std::vector<NodeId>& in, double aux) const {
  auto v = [&](std::size_t i) -> const Tensor& { return nodes_[in[i]].value; };
  switch (kind) {
    case OpKind::Add: {
      require_same_shape(v(0), v(1), "add");
      Tensor out(v(0).shape);
      const double* __restrict a = v(0).data.data();
      const double* __restrict b = v(1).data.data();
      double* __restrict o = out.data.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = a[i] + b[i];
      return out;
    }
    case OpKind::Sub: {
      require_same_shape(v(0), v(1), "sub");
      Tensor out(v(0).shape);
      const double* __restrict a = v(0).data.data();
      const double* __restrict b = v(1).data.data();
      double* __restrict o = out.data.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = a[i] - b[i];
      return out;
    }
    case OpKind::Mul: {
      require_same_shape(v(0), v(1), "mul");
      Tensor out(v(0).shape);
      const double* __restrict a = v(0).data.data();
      const double* __restrict b = v(1).data.data();
      double* __restrict o = out.data.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = a[i] * b[i];
      return out;
    }
    case OpKind::AddBias: {
      const Tensor& x = v(0);
      const Tensor& b = v(1);
      if (b.rank() != 1 || last_extent(x) != b.shape[0])
        throw ShapeError("add_bias: bias " + shape_str(b.shape) + " does not match last axis of " +
                         shape_str(x.shape));
      Tensor out(x.shape);
      const std::size_t m = b.shape[0];
      const double* __restrict xp = x.data.data();
      const double* __restrict bp = b.data.data();
      double* __restrict op = out.data.data();
      for (std::size_t r = 0; r < out.size() / m; ++r)
        for (std::size_t j = 0; j < m; ++j) op[r * m + j] = xp[r * m + j] + bp[j];
      return out;
    }
    case OpKind::MatMul: {
      const Tensor& a = v(0);
      const Tensor& b = v(1);
      if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
      Tensor out({a.shape[0], b.shape[1]});
      MatMap(out.data.data(), a.shape[0], b.shape[1]) =
          ConstMatMap(a.data.data(), a.shape[0], a.shape[1]) *
          ConstMatMap(b.data.data(), b.shape[0], b.shape[1]);
      return out;
    }
    case OpKind::Relu: {
      Tensor out(v(0).shape);
      const double* __restrict xp = v(0).data.data();
      double* __restrict op = out.data.data();
      for (std::size_t i = 0; i < out.size(); ++i) op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
      return out;
    }
    case OpKind::Sigmoid: {
      Tensor out(v(0).shape);
      const double* __restrict xp = v(0).data.data();
      double* __restrict op = out.data.data();
      for (std::size_t i = 0; i < out.size(); ++i) op[i] = 1.0 / (1.0 + std::exp(-xp[i]));
      return out;
    }
    case OpKind::Scale: {
      Tensor out(v(0).shape);
      const double* __restrict xp = v(0).data.data();
      double* __restrict op = out.data.data();
      for (std::size_t i = 0; i < out.size(); ++i) op[i] = xp[i] * aux;
      return out;
    }
    case OpKind::Conv2dValid: {
      const Tensor& x = v(0);
      const Tensor& k = v(1);
      if (k.rank() != 4)
        throw ShapeError("conv2d_valid: kernels must be [kh,kw,Cin,Cout], got " +
                         shape_str(k.shape));
      MapDims d = feature_dims(x, "conv2d_valid");
      const std::size_t kh = k.shape[0], kw = k.shape[1], ci = k.shape[2], co = k.shape[3];
      if (ci != d.c)
        throw ShapeError("conv2d_valid: input channels " + std::to_string(d.c) +
                         " vs kernel channels " + std::to_string(ci));
      if (kh > d.h || kw > d.w)
        throw ShapeError("conv2d_valid: kernel " + shape_str(k.shape) + " larger than input " +
                         shape_str(x.shape));
      const std::size_t oh = d.h - kh + 1, ow = d.w - kw + 1;
      Shape out_shape = x.rank() == 3 ? Shape{oh, ow, co} : Shape{d.n, oh, ow, co};
      Tensor out(out_shape);
      const double* __restrict xp = x.data.data();
      const double* __restrict kp = k.data.data();
      double* __restrict op = out.data.data();
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* xn = xp + n * d.h * d.w * d.c;
        double* on = op + n * oh * ow * co;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t z = 0; z < ow; ++z) {
            double* __restrict acc = on + (y * ow + z) * co;
            for (std::size_t fy = 0; fy < kh; ++fy)
              for (std::size_t fz = 0; fz < kw; ++fz) {
                const double* xr = xn + ((y + fy) * d.w + (z + fz)) * d.c;
                const double* kr = kp + (fy * kw + fz) * ci * co;
                for (std::size_t c = 0; c < ci; ++c) {
                  const double xv = xr[c];
                  const double* __restrict kc = kr + c * co;
                  for (std::size_t o = 0; o < co; ++o) acc[o] += xv * kc[o];
                }
              }
          }
      }
      return out;
    }
    case OpKind::GlobalAvgPool: {
      const Tensor& x = v(0);
      MapDims d = feature_dims(x, "global_avg_pool");
      Shape out_shape = x.rank() == 3 ? Shape{d.c} : Shape{d.n, d.c};
      Tensor out(out_shape);
      const double inv = 1.0 / static_cast<double>(d.h * d.w);
      for (std::size_t n = 0; n < d.n; ++n) {
        double* on = out.data.data() + n * d.c;
        const double* xn = x.data.data() + n * d.h * d.w * d.c;
        for (std::size_t s = 0; s < d.h * d.w; ++s)
          for (std::size_t c = 0; c < d.c; ++c) on[c] += xn[s * d.c + c];
        for (std::size_t c = 0; c < d.c; ++c) on[c] *= inv;
      }
      return out;
    }
    case OpKind::ChannelScale: {
      const Tensor& x = v(0);
      const Tensor& s = v(1);
      MapDims d = feature_dims(x, "channel_scale");
      const bool batched = x.rank() == 4;
      if ((batched && (s.rank() != 2 || s.shape[0] != d.n || s.shape[1] != d.c)) ||
          (!batched && (s.rank() != 1 || s.shape[0] != d.c)))
        throw ShapeError("channel_scale: weights " + shape_str(s.shape) +
                         " do not match features " + shape_str(x.shape));
      Tensor out(x.shape);
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* __restrict sn = s.data.data() + n * d.c;
        const double* __restrict xn = x.data.data() + n * d.h * d.w * d.c;
        double* __restrict on = out.data.data() + n * d.h * d.w * d.c;
        for (std::size_t sp = 0; sp < d.h * d.w; ++sp)
          for (std::size_t c = 0; c < d.c; ++c) on[sp * d.c + c] = xn[sp * d.c + c] * sn[c];
      }
      return out;
    }
    case OpKind::ConcatLast: {
      const Tensor& first = v(0);
      Shape lead(first.shape.begin(), first.shape.end() - 1);
      std::size_t total_last = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const Tensor& t = v(i);
        Shape tl(t.shape.begin(), t.shape.end() - 1);
        if (t.rank() != first.rank() || tl != lead)
          throw ShapeError("concat_last: leading dims differ, " + shape_str(first.shape) +
                           " vs " + shape_str(t.shape));
        total_last += last_extent(t);
      }
      Shape out_shape = lead;
      out_shape.push_back(total_last);
      Tensor out(out_shape);
      const std::size_t rows = out.size() / total_last;
      std::size_t col = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const Tensor& t = v(i);
        const std::size_t m = last_extent(t);
        for (std::size_t r = 0; r < rows; ++r)
          std::memcpy(out.data.data() + r * total_last + col, t.data.data() + r * m,
                      m * sizeof(double));
        col += m;
      }
      return out;
    }
    case OpKind::Sum: {
      double acc = 0;
      for (double x : v(0).data) acc += x;
      return Tensor::scalar(acc);
    }
    case OpKind::Mean: {
      double acc = 0;
      for (double x : v(0).data) acc += x;
      return Tensor::scalar(acc / static_cast<double>(v(0).size()));
    }
    case OpKind::MeanAbsErr: {
      require_same_shape(v(0), v(1), "mean_abs_err");
      double acc = 0;
      for (std::size_t i = 0; i < v(0).size(); ++i) acc += std::fabs(v(0)[i] - v(1)[i]);
      return Tensor::scalar(acc / static_cast<double>(v(0).size()));
    }
    default:
      throw ContractError("eval: leaf op has no forward rule");
  }
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Graph::grad(NodeId id) { return grad_buffer(id); }

void Graph::backward(NodeId loss) {
  if (nodes_[loss].value.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(nodes_[loss].value.shape));
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buffer(loss)[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.has_grad || n.inputs.empty()) continue;
    propagate(n);
  }
}

void Graph::propagate(const Node& node) {
  const Tensor& g = node.grad;
  auto in_val = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  auto in_grad = [&](std::size_t i) -> Tensor& { return grad_buffer(node.inputs[i]); };
  switch (node.kind) {
    case OpKind::Add: {
      double* __restrict ga = in_grad(0).data.data();
      double* __restrict gb = in_grad(1).data.data();
      const double* __restrict gp = g.data.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += gp[i];
        gb[i] += gp[i];
      }
      break;
    }
    case OpKind::Sub: {
      Tensor& ga = in_grad(0);
      Tensor& gb = in_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case OpKind::Mul: {
      Tensor& ga = in_grad(0);
      Tensor& gb = in_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * in_val(1)[i];
        gb[i] += g[i] * in_val(0)[i];
      }
      break;
    }
    case OpKind::AddBias: {
      const std::size_t m = in_val(1).shape[0];
      double* __restrict gx = in_grad(0).data.data();
      double* __restrict gb = in_grad(1).data.data();
      const double* __restrict gp = g.data.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += gp[i];
      for (std::size_t r = 0; r < g.size() / m; ++r)
        for (std::size_t j = 0; j < m; ++j) gb[j] += gp[r * m + j];
      break;
    }
    case OpKind::MatMul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
      ConstMatMap gm(g.data.data(), n, m);
      ConstMatMap am(a.data.data(), n, k);
      ConstMatMap bm(b.data.data(), k, m);
      MatMap(in_grad(0).data.data(), n, k).noalias() += gm * bm.transpose();
      MatMap(in_grad(1).data.data(), k, m).noalias() += am.transpose() * gm;
      break;
    }
    case OpKind::Relu: {
      double* __restrict gx = in_grad(0).data.data();
      const double* __restrict gp = g.data.data();
      const double* __restrict xp = in_val(0).data.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xp[i] > 0.0 ? gp[i] : 0.0;
      break;
    }
    case OpKind::Sigmoid: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = node.value[i];
        gx[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::Scale: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.aux;
      break;
    }
    case OpKind::Conv2dValid: {
      const Tensor& x = in_val(0);
      const Tensor& k = in_val(1);
      MapDims d = feature_dims(x, "conv2d_valid");
      const std::size_t kh = k.shape[0], kw = k.shape[1], ci = k.shape[2], co = k.shape[3];
      const std::size_t oh = d.h - kh + 1, ow = d.w - kw + 1;
      Tensor& gx = in_grad(0);
      Tensor& gk = in_grad(1);
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* xn = x.data.data() + n * d.h * d.w * d.c;
        double* gxn = gx.data.data() + n * d.h * d.w * d.c;
        const double* gn = g.data.data() + n * oh * ow * co;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t z = 0; z < ow; ++z) {
            const double* go = gn + (y * ow + z) * co;
            for (std::size_t fy = 0; fy < kh; ++fy)
              for (std::size_t fz = 0; fz < kw; ++fz) {
                const std::size_t xoff = ((y + fy) * d.w + (z + fz)) * d.c;
                const std::size_t koff = (fy * kw + fz) * ci * co;
                for (std::size_t c = 0; c < ci; ++c) {
                  const double xv = xn[xoff + c];
                  const double* __restrict kc = k.data.data() + koff + c * co;
                  double* __restrict gkc = gk.data.data() + koff + c * co;
                  double acc = 0;
                  for (std::size_t o = 0; o < co; ++o) {
                    acc += go[o] * kc[o];
                    gkc[o] += go[o] * xv;
                  }
                  gxn[xoff + c] += acc;
                }
              }
          }
      }
      break;
    }
    case OpKind::GlobalAvgPool: {
      const Tensor& x = in_val(0);
      MapDims d = feature_dims(x, "global_avg_pool");
      Tensor& gx = in_grad(0);
      const double inv = 1.0 / static_cast<double>(d.h * d.w);
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* __restrict gn = g.data.data() + n * d.c;
        double* __restrict gxn = gx.data.data() + n * d.h * d.w * d.c;
        for (std::size_t s = 0; s < d.h * d.w; ++s)
          for (std::size_t c = 0; c < d.c; ++c) gxn[s * d.c + c] += gn[c] * inv;
      }
      break;
    }
    case OpKind::ChannelScale: {
      const Tensor& x = in_val(0);
      const Tensor& s = in_val(1);
      MapDims d = feature_dims(x, "channel_scale");
      Tensor& gx = in_grad(0);
      Tensor& gs = in_grad(1);
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* __restrict sn = s.data.data() + n * d.c;
        double* __restrict gsn = gs.data.data() + n * d.c;
        const double* __restrict xn = x.data.data() + n * d.h * d.w * d.c;
        double* __restrict gxn = gx.data.data() + n * d.h * d.w * d.c;
        const double* __restrict gn = g.data.data() + n * d.h * d.w * d.c;
        for (std::size_t sp = 0; sp < d.h * d.w; ++sp)
          for (std::size_t c = 0; c < d.c; ++c) {
            gxn[sp * d.c + c] += gn[sp * d.c + c] * sn[c];
            gsn[c] += gn[sp * d.c + c] * xn[sp * d.c + c];
          }
      }
      break;
    }
    case OpKind::ConcatLast: {
      const std::size_t total_last = last_extent(node.value);
      const std::size_t rows = node.value.size() / total_last;
      std::size_t col = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const std::size_t m = last_extent(in_val(i));
        Tensor& gi = in_grad(i);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < m; ++j) gi[r * m + j] += g[r * total_last + col + j];
        col += m;
      }
      break;
    }
    case OpKind::Reshape: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      break;
    }
    case OpKind::Sum: {
      Tensor& gx = in_grad(0);
      for (double& v : gx.data) v += g[0];
      break;
    }
    case OpKind::Mean: {
      Tensor& gx = in_grad(0);
      const double inv = 1.0 / static_cast<double>(gx.size());
      for (double& v : gx.data) v += g[0] * inv;
      break;
    }
    case OpKind::MeanAbsErr: {
      Tensor& ga = in_grad(0);
      Tensor& gb = in_grad(1);
      const double inv = g[0] / static_cast<double>(in_val(0).size());
      for (std::size_t i = 0; i < in_val(0).size(); ++i) {
        const double diff = in_val(0)[i] - in_val(1)[i];
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        ga[i] += s * inv;
        gb[i] -= s * inv;
      }
      break;
    }
    default:
      break;
  }
}

}  // namespace danet
