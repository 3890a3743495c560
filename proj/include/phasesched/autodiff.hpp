#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "phasesched/matrix.hpp"

namespace phasesched {

/// A trainable parameter block with a gradient accumulator of the same
/// shape. Vectors are stored as 1xN matrices.
struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  explicit Param(Matrix v) : value(std::move(v)), grad(value.rows, value.cols) {}
  Param(std::size_t r, std::size_t c) : value(r, c), grad(r, c) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class Act { identity, tanh_fn, relu };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::identity: return "identity";
    case Act::tanh_fn: return "tanh";
    case Act::relu: return "relu";
  }
  return "identity";
}

inline Act act_from_name(const std::string& s) {
  if (s == "identity") return Act::identity;
  if (s == "tanh") return Act::tanh_fn;
  if (s == "relu") return Act::relu;
  throw std::invalid_argument("unknown activation: " + s);
}

struct DenseLayer {
  Param w;  // out x in
  Param b;  // 1 x out
  Act act = Act::identity;
};

/// Small fully-connected network. Layer i maps sizes[i] -> sizes[i+1].
struct DenseNet {
  std::vector<std::size_t> sizes;
  std::vector<DenseLayer> layers;
  bool frozen = false;

  static DenseNet make(std::vector<std::size_t> sizes, std::vector<Act> acts,
                       Rng& rng, double out_scale = 1.0) {
    require(sizes.size() >= 2, "DenseNet: need at least one layer");
    require(acts.size() == sizes.size() - 1, "DenseNet: one activation per layer");
    DenseNet net;
    net.sizes = std::move(sizes);
    for (std::size_t i = 0; i + 1 < net.sizes.size(); ++i) {
      DenseLayer layer;
      layer.w = Param(net.sizes[i + 1], net.sizes[i]);
      layer.b = Param(1, net.sizes[i + 1]);
      layer.act = acts[i];
      const double scale =
          std::sqrt(1.0 / static_cast<double>(net.sizes[i])) *
          (i + 2 == net.sizes.size() ? out_scale : 1.0);
      for (auto& v : layer.w.value.data) v = scale * rng.gaussian();
      net.layers.push_back(std::move(layer));
    }
    return net;
  }

  std::size_t input_size() const { return sizes.front(); }
  std::size_t output_size() const { return sizes.back(); }

  void collect_params(std::vector<Param*>& out) {
    for (auto& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
  }
};

/// Reverse-mode tape over vector-valued nodes. Supported primitives are
/// exactly what the dense pipelines need: affine layers, tanh/relu,
/// add, scale, concat and elementwise mean. backward() walks the ops in
/// reverse recording order and accumulates into Param::grad.
class GradTape {
 public:
  enum class Op { constant, param, affine, activation, add, scale, concat, slice, mean };

  struct Node {
    Op op;
    std::vector<double> value;
    std::vector<int> inputs;
    Param* w = nullptr;     // affine weight, or the parameter of a param leaf
    Param* b = nullptr;     // affine bias
    std::size_t row = 0;    // row offset within a param leaf
    Act act = Act::identity;
    double factor = 1.0;    // scale op
  };

  int constant(std::vector<double> v) {
    return push({Op::constant, std::move(v), {}, nullptr, nullptr, 0, Act::identity, 1.0});
  }

  /// Leaf exposing one row of a parameter matrix; gradients flow into it.
  int param_row(Param& p, std::size_t row) {
    std::vector<double> v(p.value.cols);
    for (std::size_t j = 0; j < p.value.cols; ++j) v[j] = p.value.at(row, j);
    return push({Op::param, std::move(v), {}, &p, nullptr, row, Act::identity, 1.0});
  }

  int affine(Param& w, Param& b, int x) {
    const auto& xv = nodes_[x].value;
    require(w.value.cols == xv.size(), "affine: input size mismatch");
    require(b.value.cols == w.value.rows, "affine: bias size mismatch");
    std::vector<double> y(w.value.rows);
    for (std::size_t i = 0; i < w.value.rows; ++i) {
      double s = b.value.at(0, i);
      const double* wrow = &w.value.data[i * w.value.cols];
      for (std::size_t j = 0; j < w.value.cols; ++j) s += wrow[j] * xv[j];
      y[i] = s;
    }
    return push({Op::affine, std::move(y), {x}, &w, &b, 0, Act::identity, 1.0});
  }

  int activation(int x, Act a) {
    if (a == Act::identity) return x;
    std::vector<double> y = nodes_[x].value;
    for (auto& v : y) v = (a == Act::tanh_fn) ? std::tanh(v) : (v > 0.0 ? v : 0.0);
    return push({Op::activation, std::move(y), {x}, nullptr, nullptr, 0, a, 1.0});
  }

  int add(int a, int b) {
    require(nodes_[a].value.size() == nodes_[b].value.size(), "add: size mismatch");
    std::vector<double> y = nodes_[a].value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += nodes_[b].value[i];
    return push({Op::add, std::move(y), {a, b}, nullptr, nullptr, 0, Act::identity, 1.0});
  }

  int scale(int x, double factor) {
    std::vector<double> y = nodes_[x].value;
    for (auto& v : y) v *= factor;
    return push({Op::scale, std::move(y), {x}, nullptr, nullptr, 0, Act::identity, factor});
  }

  int concat(const std::vector<int>& parts) {
    std::vector<double> y;
    for (int id : parts) {
      const auto& v = nodes_[id].value;
      y.insert(y.end(), v.begin(), v.end());
    }
    return push({Op::concat, std::move(y), parts, nullptr, nullptr, 0, Act::identity, 1.0});
  }

  /// Contiguous sub-range of a node's value (the row field holds the offset).
  int slice(int x, std::size_t offset, std::size_t len) {
    const auto& xv = nodes_[x].value;
    require(offset + len <= xv.size(), "slice: range out of bounds");
    std::vector<double> y(xv.begin() + offset, xv.begin() + offset + len);
    return push({Op::slice, std::move(y), {x}, nullptr, nullptr, offset, Act::identity, 1.0});
  }

  /// Elementwise mean of same-length nodes.
  int mean(const std::vector<int>& parts) {
    require(!parts.empty(), "mean: empty input list");
    std::vector<double> y = nodes_[parts[0]].value;
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const auto& v = nodes_[parts[k]].value;
      require(v.size() == y.size(), "mean: size mismatch");
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(parts.size());
    for (auto& v : y) v *= inv;
    return push({Op::mean, std::move(y), parts, nullptr, nullptr, 0, Act::identity, 1.0});
  }

  const std::vector<double>& value(int id) const { return nodes_[id].value; }
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(output)/d(param) into Param::grad for every parameter
  /// the pass touched. Visits ops in exact reverse recording order.
  void backward(int output, const std::vector<double>& output_grad) {
    if (nodes_.empty()) throw std::logic_error("backward: empty tape");
    require(output >= 0 && static_cast<std::size_t>(output) < nodes_.size(),
            "backward: bad output node");
    require(output_grad.size() == nodes_[output].value.size(),
            "backward: output_grad size mismatch");
    std::vector<std::vector<double>> grads(nodes_.size());
    grads[output] = output_grad;
    for (int id = output; id >= 0; --id) {
      auto& g = grads[id];
      if (g.empty()) continue;
      Node& n = nodes_[id];
      switch (n.op) {
        case Op::constant:
          break;
        case Op::param:
          for (std::size_t j = 0; j < g.size(); ++j)
            n.w->grad.at(n.row, j) += g[j];
          break;
        case Op::affine: {
          const auto& xv = nodes_[n.inputs[0]].value;
          auto& xg = touch(grads, n.inputs[0], xv.size());
          Param& w = *n.w;
          Param& b = *n.b;
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            b.grad.at(0, i) += gi;
            double* wgrow = &w.grad.data[i * w.grad.cols];
            const double* wrow = &w.value.data[i * w.value.cols];
            for (std::size_t j = 0; j < xv.size(); ++j) {
              wgrow[j] += gi * xv[j];
              xg[j] += gi * wrow[j];
            }
          }
          break;
        }
        case Op::activation: {
          const auto& xv = nodes_[n.inputs[0]].value;
          auto& xg = touch(grads, n.inputs[0], xv.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (n.act == Act::tanh_fn) {
              const double y = n.value[i];
              xg[i] += g[i] * (1.0 - y * y);
            } else {  // relu
              xg[i] += xv[i] > 0.0 ? g[i] : 0.0;
            }
          }
          break;
        }
        case Op::add:
          for (int in : n.inputs) {
            auto& xg = touch(grads, in, g.size());
            for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
          }
          break;
        case Op::scale: {
          auto& xg = touch(grads, n.inputs[0], g.size());
          for (std::size_t i = 0; i < g.size(); ++i) xg[i] += n.factor * g[i];
          break;
        }
        case Op::concat: {
          std::size_t off = 0;
          for (int in : n.inputs) {
            const std::size_t len = nodes_[in].value.size();
            auto& xg = touch(grads, in, len);
            for (std::size_t i = 0; i < len; ++i) xg[i] += g[off + i];
            off += len;
          }
          break;
        }
        case Op::slice: {
          auto& xg = touch(grads, n.inputs[0], nodes_[n.inputs[0]].value.size());
          for (std::size_t i = 0; i < g.size(); ++i) xg[n.row + i] += g[i];
          break;
        }
        case Op::mean: {
          const double inv = 1.0 / static_cast<double>(n.inputs.size());
          for (int in : n.inputs) {
            auto& xg = touch(grads, in, g.size());
            for (std::size_t i = 0; i < g.size(); ++i) xg[i] += inv * g[i];
          }
          break;
        }
      }
    }
  }

 private:
  std::vector<Node> nodes_;

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  static std::vector<double>& touch(std::vector<std::vector<double>>& grads,
                                    int id, std::size_t len) {
    if (grads[id].empty()) grads[id].assign(len, 0.0);
    return grads[id];
  }
};

/// Plain forward pass; records onto the tape when one is supplied.
inline std::vector<double> forward(const DenseNet& net,
                                   const std::vector<double>& input,
                                   GradTape* tape = nullptr) {
  require(input.size() == net.input_size(), "forward: input length mismatch");
  if (tape) {
    int node = tape->constant(input);
    for (auto& l : const_cast<DenseNet&>(net).layers) {
      node = tape->affine(l.w, l.b, node);
      node = tape->activation(node, l.act);
    }
    return tape->value(node);
  }
  std::vector<double> x = input;
  for (const auto& l : net.layers) {
    std::vector<double> y(l.w.value.rows);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double s = l.b.value.at(0, i);
      const double* wrow = &l.w.value.data[i * l.w.value.cols];
      for (std::size_t j = 0; j < x.size(); ++j) s += wrow[j] * x[j];
      y[i] = (l.act == Act::tanh_fn) ? std::tanh(s)
           : (l.act == Act::relu ? (s > 0.0 ? s : 0.0) : s);
    }
    x = std::move(y);
  }
  return x;
}

/// Taped forward starting from an existing tape node.
inline int forward_taped(DenseNet& net, int input_node, GradTape& tape) {
  int node = input_node;
  for (auto& l : net.layers) {
    node = tape.affine(l.w, l.b, node);
    node = tape.activation(node, l.act);
  }
  return node;
}

/// Adam over an explicit parameter list; moment state is keyed by the
/// parameter's address, so the list must be stable across steps.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (Param* p : params) {
      auto& st = state_[p];
      if (st.m.empty()) {
        st.m.assign(p->value.data.size(), 0.0);
        st.v.assign(p->value.data.size(), 0.0);
      }
      for (std::size_t i = 0; i < p->value.data.size(); ++i) {
        const double g = p->grad.data[i];
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
        p->value.data[i] -=
            lr_ * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps_);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<Param*, Moments> state_;
};

inline void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace phasesched
