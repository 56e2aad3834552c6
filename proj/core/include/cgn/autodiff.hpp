#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cgn/tensor.hpp"

namespace cgn::ad {

/// Reverse-mode autodiff over batched tensors.
///
/// Graphs are built per forward pass; leaves flagged requires_grad
/// (parameters) persist across passes and accumulate gradients until
/// zeroed. Feature tensors are (N, C, H, W); per-sample reductions give
/// (N); full reductions give rank-0 scalars.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls from this->grad into parents

  void accumulate(const Tensor& g);
  double* grad_data();
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var constant_scalar(double v);
/// Value copy with the gradient path severed.
Var detach(const Var& x);

/// Runs backpropagation from a scalar root (seed gradient 1).
void backward(const Var& root);

// --- structure ---------------------------------------------------------
Var reshape(const Var& x, std::vector<int> shape);
Var concat_channels(const Var& a, const Var& b);

// --- elementwise -------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
/// s - x, elementwise.
Var sub_from(double s, const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var log_(const Var& x);
Var clamp(const Var& x, double lo, double hi);
/// max(sqrt(x), floor); gradient is zero in the floored region.
Var sqrt_floor(const Var& x, double floor_value);
/// Elementwise product with a constant tensor of identical shape.
Var mul_const(const Var& x, Tensor m);
/// x (N,C,H,W) times map (N,1,H,W), broadcast across channels.
Var mul_bcast_map(const Var& x, Tensor map);

// --- reductions / broadcasts -------------------------------------------
/// (N,C,H,W) -> (N,C): spatial mean per channel.
Var channel_mean(const Var& x);
/// (N,C) -> (N,C,H,W).
Var broadcast_spatial(const Var& x, int h, int w);
/// (N,C,H,W) -> (N,1,H,W): sum across channels.
Var sum_channels(const Var& x);
/// (N,C,H,W) -> (N,C): spatial sum.
Var sum_spatial(const Var& x);
/// (N,C,H,W) -> (N,C): global average pooling.
Var global_avg_pool(const Var& x);
/// Any shape -> rank-0 scalar.
Var sum_all(const Var& x);
/// (N,K) -> (N): extract one column.
Var column(const Var& x, int j);

// --- neural layers ------------------------------------------------------
/// x (N,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout); zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// 2x2 average pooling (H, W must be even).
Var avg_pool2(const Var& x);
/// x (N,D), w (K,D), b (K) -> (N,K).
Var linear(const Var& x, const Var& w, const Var& b);
/// Rowwise softmax over (N,K).
Var softmax_rows(const Var& x);

/// Symmetric chamfer distance between position sets of two feature maps,
/// one value per sample: mean over both directions of nearest-neighbor
/// squared channel distances, divided by 2*h*w.
Var chamfer(const Var& a, const Var& b);

// --- parameters ---------------------------------------------------------
/// Named trainable leaves of one module.
class ParamSet {
public:
  Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<Var> vars() const;
  void zero_grad();
  /// Constant snapshots (no gradient flow), same order as items().
  std::vector<Var> frozen() const;
  std::int64_t count() const;

private:
  std::vector<std::pair<std::string, Var>> items_;
};

/// Adam with bias correction; one instance per parameter group.
class Adam {
public:
  Adam(std::vector<Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  double lr() const { return lr_; }

private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

}  // namespace cgn::ad
