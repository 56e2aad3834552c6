#include "cgn/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace cgn::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
}

void check_rank4(const Var& x, const char* op) {
  if (x->value.rank() != 4)
    throw std::invalid_argument(std::string(op) + ": expected rank-4 tensor, got " +
                                x->value.shape_str());
}

/// Elementwise op with per-element gradient factors computed lazily.
template <class Fwd, class Bwd>
Var unary_elementwise(const Var& x, Fwd fwd, Bwd grad_factor) {
  Tensor out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(x->value[i]);
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, grad_factor](Node& n) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i)
      g[i] = n.grad[i] * grad_factor(xp->value[i], n.value[i]);
    xp->accumulate(g);
  });
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (!grad_alloc) {
    grad = Tensor(value.shape());
    grad_alloc = true;
  }
  for (std::int64_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

double* Node::grad_data() {
  if (!grad_alloc) {
    grad = Tensor(value.shape());
    grad_alloc = true;
  }
  return grad.data();
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (requires_grad) {
    n->grad = Tensor(n->value.shape());
    n->grad_alloc = true;
  }
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Var detach(const Var& x) { return constant(x->value); }

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  // Iterative post-order DFS; reverse gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->accumulate(Tensor::full(root->value.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_alloc) n->backprop(*n);
  }
}

// --- structure -----------------------------------------------------------

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(shape);
  Var xp = x;
  return make_node(std::move(out), {x}, [xp](Node& n) {
    if (!xp->requires_grad) return;
    xp->accumulate(n.grad.reshaped(xp->value.shape()));
  });
}

Var concat_channels(const Var& a, const Var& b) {
  check_rank4(a, "concat_channels");
  check_rank4(b, "concat_channels");
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const int n = sa[0], ca = sa[1], cb = sb[1], h = sa[2], w = sa[3];
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a->value.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b->value.data() + i * cb * hw, cb * hw,
                out.data() + i * (ca + cb) * hw + ca * hw);
  }
  Var ap = a, bp = b;
  return make_node(std::move(out), {a, b}, [ap, bp, n, ca, cb, hw](Node& node) {
    if (ap->requires_grad) {
      Tensor g(ap->value.shape());
      for (int i = 0; i < n; ++i)
        std::copy_n(node.grad.data() + i * (ca + cb) * hw, ca * hw, g.data() + i * ca * hw);
      ap->accumulate(g);
    }
    if (bp->requires_grad) {
      Tensor g(bp->value.shape());
      for (int i = 0; i < n; ++i)
        std::copy_n(node.grad.data() + i * (ca + cb) * hw + ca * hw, cb * hw,
                    g.data() + i * cb * hw);
      bp->accumulate(g);
    }
  });
}

// --- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  Var ap = a, bp = b;
  return make_node(std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad) ap->accumulate(n.grad);
    if (bp->requires_grad) bp->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
  Var ap = a, bp = b;
  return make_node(std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad) ap->accumulate(n.grad);
    if (bp->requires_grad) {
      Tensor g(bp->value.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = -n.grad[i];
      bp->accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  Var ap = a, bp = b;
  return make_node(std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad) {
      Tensor g(ap->value.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * bp->value[i];
      ap->accumulate(g);
    }
    if (bp->requires_grad) {
      Tensor g(bp->value.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * ap->value[i];
      bp->accumulate(g);
    }
  });
}

Var divide(const Var& a, const Var& b) {
  check_same_shape(a, b, "divide");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] / b->value[i];
  Var ap = a, bp = b;
  return make_node(std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad) {
      Tensor g(ap->value.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] / bp->value[i];
      ap->accumulate(g);
    }
    if (bp->requires_grad) {
      Tensor g(bp->value.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i)
        g[i] = -n.grad[i] * ap->value[i] / (bp->value[i] * bp->value[i]);
      bp->accumulate(g);
    }
  });
}

Var scale(const Var& x, double s) {
  return unary_elementwise(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary_elementwise(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var sub_from(double s, const Var& x) {
  return unary_elementwise(
      x, [s](double v) { return s - v; }, [](double, double) { return -1.0; });
}

Var relu(const Var& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary_elementwise(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& x) {
  return unary_elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double out) { return out * (1.0 - out); });
}

Var log_(const Var& x) {
  return unary_elementwise(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary_elementwise(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var sqrt_floor(const Var& x, double floor_value) {
  return unary_elementwise(
      x,
      [floor_value](double v) { return std::max(std::sqrt(std::max(v, 0.0)), floor_value); },
      [floor_value](double v, double) {
        const double root = std::sqrt(std::max(v, 0.0));
        return root > floor_value ? 0.5 / root : 0.0;
      });
}

Var mul_const(const Var& x, Tensor m) {
  if (!x->value.same_shape(m))
    throw std::invalid_argument("mul_const: shape mismatch");
  Tensor out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * m[i];
  Var xp = x;
  auto mp = std::make_shared<Tensor>(std::move(m));
  return make_node(std::move(out), {x}, [xp, mp](Node& n) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * (*mp)[i];
    xp->accumulate(g);
  });
}

Var mul_bcast_map(const Var& x, Tensor map) {
  check_rank4(x, "mul_bcast_map");
  const auto& s = x->value.shape();
  if (map.rank() != 4 || map.dim(0) != s[0] || map.dim(1) != 1 || map.dim(2) != s[2] ||
      map.dim(3) != s[3])
    throw std::invalid_argument("mul_bcast_map: map must be (N,1,H,W)");
  const int n = s[0], c = s[1];
  const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
  Tensor out(s);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t p = 0; p < hw; ++p)
        out[(static_cast<std::int64_t>(i) * c + ch) * hw + p] =
            x->value[(static_cast<std::int64_t>(i) * c + ch) * hw + p] * map[i * hw + p];
  Var xp = x;
  auto mp = std::make_shared<Tensor>(std::move(map));
  return make_node(std::move(out), {x}, [xp, mp, n, c, hw](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < hw; ++p)
          g[(static_cast<std::int64_t>(i) * c + ch) * hw + p] =
              nd.grad[(static_cast<std::int64_t>(i) * c + ch) * hw + p] * (*mp)[i * hw + p];
    xp->accumulate(g);
  });
}

// --- reductions / broadcasts ----------------------------------------------

Var channel_mean(const Var& x) {
  check_rank4(x, "channel_mean");
  const auto& s = x->value.shape();
  const int n = s[0], c = s[1];
  const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
  Tensor out({n, c});
  for (int i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) acc += x->value[i * hw + p];
    out[i] = acc / static_cast<double>(hw);
  }
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, c, hw](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    const double inv = 1.0 / static_cast<double>(hw);
    for (int i = 0; i < n * c; ++i)
      for (std::int64_t p = 0; p < hw; ++p) g[i * hw + p] = nd.grad[i] * inv;
    xp->accumulate(g);
  });
}

Var broadcast_spatial(const Var& x, int h, int w) {
  if (x->value.rank() != 2)
    throw std::invalid_argument("broadcast_spatial: expected (N,C)");
  const int n = x->value.dim(0), c = x->value.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, c, h, w});
  for (int i = 0; i < n * c; ++i)
    for (std::int64_t p = 0; p < hw; ++p) out[i * hw + p] = x->value[i];
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, c, hw](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (int i = 0; i < n * c; ++i) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < hw; ++p) acc += nd.grad[i * hw + p];
      g[i] = acc;
    }
    xp->accumulate(g);
  });
}

Var sum_channels(const Var& x) {
  check_rank4(x, "sum_channels");
  const auto& s = x->value.shape();
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, 1, h, w});
  for (int i = 0; i < n; ++i)
    for (std::int64_t p = 0; p < hw; ++p) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch)
        acc += x->value[(static_cast<std::int64_t>(i) * c + ch) * hw + p];
      out[i * hw + p] = acc;
    }
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, c, hw](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < hw; ++p)
          g[(static_cast<std::int64_t>(i) * c + ch) * hw + p] = nd.grad[i * hw + p];
    xp->accumulate(g);
  });
}

Var sum_spatial(const Var& x) {
  check_rank4(x, "sum_spatial");
  const auto& s = x->value.shape();
  const int n = s[0], c = s[1];
  const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
  Tensor out({n, c});
  for (int i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) acc += x->value[i * hw + p];
    out[i] = acc;
  }
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, c, hw](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (int i = 0; i < n * c; ++i)
      for (std::int64_t p = 0; p < hw; ++p) g[i * hw + p] = nd.grad[i];
    xp->accumulate(g);
  });
}

Var global_avg_pool(const Var& x) { return channel_mean(x); }

Var sum_all(const Var& x) {
  Tensor out = Tensor::scalar(x->value.sum());
  Var xp = x;
  return make_node(std::move(out), {x}, [xp](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g = Tensor::full(xp->value.shape(), nd.grad[0]);
    xp->accumulate(g);
  });
}

Var column(const Var& x, int j) {
  if (x->value.rank() != 2) throw std::invalid_argument("column: expected (N,K)");
  const int n = x->value.dim(0), k = x->value.dim(1);
  if (j < 0 || j >= k) throw std::out_of_range("column index out of range");
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[i] = x->value[static_cast<std::int64_t>(i) * k + j];
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, k, j](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (int i = 0; i < n; ++i) g[static_cast<std::int64_t>(i) * k + j] = nd.grad[i];
    xp->accumulate(g);
  });
}

// --- neural layers ----------------------------------------------------------

namespace {

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, oh, ow;
  std::int64_t cols;  // cin*kh*kw
  std::int64_t rows;  // n*oh*ow
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  ConvDims d;
  d.n = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  if (w.dim(1) != d.cin)
    throw std::invalid_argument("conv2d: weight input channels mismatch");
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh <= 0 || d.ow <= 0) throw std::invalid_argument("conv2d: empty output");
  d.cols = static_cast<std::int64_t>(d.cin) * d.kh * d.kw;
  d.rows = static_cast<std::int64_t>(d.n) * d.oh * d.ow;
  return d;
}

void im2col(const Tensor& x, const ConvDims& d, int stride, int pad, double* col) {
  for (int n = 0; n < d.n; ++n) {
    const double* xn = x.data() + static_cast<std::int64_t>(n) * d.cin * d.h * d.w;
    for (int oh = 0; oh < d.oh; ++oh) {
      for (int ow = 0; ow < d.ow; ++ow) {
        double* row =
            col + ((static_cast<std::int64_t>(n) * d.oh + oh) * d.ow + ow) * d.cols;
        for (int c = 0; c < d.cin; ++c) {
          const double* xc = xn + static_cast<std::int64_t>(c) * d.h * d.w;
          for (int i = 0; i < d.kh; ++i) {
            const int r = oh * stride - pad + i;
            for (int j = 0; j < d.kw; ++j) {
              const int cc = ow * stride - pad + j;
              *row++ = (r >= 0 && r < d.h && cc >= 0 && cc < d.w)
                           ? xc[static_cast<std::int64_t>(r) * d.w + cc]
                           : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, int stride, int pad, Tensor& gx) {
  for (int n = 0; n < d.n; ++n) {
    double* xn = gx.data() + static_cast<std::int64_t>(n) * d.cin * d.h * d.w;
    for (int oh = 0; oh < d.oh; ++oh) {
      for (int ow = 0; ow < d.ow; ++ow) {
        const double* row =
            col + ((static_cast<std::int64_t>(n) * d.oh + oh) * d.ow + ow) * d.cols;
        for (int c = 0; c < d.cin; ++c) {
          double* xc = xn + static_cast<std::int64_t>(c) * d.h * d.w;
          for (int i = 0; i < d.kh; ++i) {
            const int r = oh * stride - pad + i;
            for (int j = 0; j < d.kw; ++j) {
              const int cc = ow * stride - pad + j;
              if (r >= 0 && r < d.h && cc >= 0 && cc < d.w)
                xc[static_cast<std::int64_t>(r) * d.w + cc] += *row;
              ++row;
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_rank4(x, "conv2d");
  if (w->value.rank() != 4) throw std::invalid_argument("conv2d: weight must be rank 4");
  const ConvDims d = conv_dims(x->value, w->value, stride, pad);
  if (b->value.rank() != 1 || b->value.dim(0) != d.cout)
    throw std::invalid_argument("conv2d: bad bias shape");

  // col: (rows, cols); out_mat = col * W^T : (rows, cout)
  auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(d.rows * d.cols));
  im2col(x->value, d, stride, pad, col->data());
  RowMat out_mat(d.rows, d.cout);
  {
    MapConst col_m(col->data(), d.rows, d.cols);
    MapConst w_m(w->value.data(), d.cout, d.cols);
    out_mat.noalias() = col_m * w_m.transpose();
  }
  Tensor out({d.n, d.cout, d.oh, d.ow});
  const std::int64_t ohw = static_cast<std::int64_t>(d.oh) * d.ow;
  for (int n = 0; n < d.n; ++n)
    for (std::int64_t p = 0; p < ohw; ++p) {
      const double* src = out_mat.data() + (n * ohw + p) * d.cout;
      for (int c = 0; c < d.cout; ++c)
        out[(static_cast<std::int64_t>(n) * d.cout + c) * ohw + p] = src[c] + b->value[c];
    }

  Var xp = x, wp = w, bp = b;
  return make_node(std::move(out), {x, w, b}, [xp, wp, bp, d, stride, pad, col, ohw](Node& nd) {
    // Gather grad into (rows, cout) layout.
    RowMat gout(d.rows, d.cout);
    for (int n = 0; n < d.n; ++n)
      for (std::int64_t p = 0; p < ohw; ++p) {
        double* dst = gout.data() + (n * ohw + p) * d.cout;
        for (int c = 0; c < d.cout; ++c)
          dst[c] = nd.grad[(static_cast<std::int64_t>(n) * d.cout + c) * ohw + p];
      }
    if (bp->requires_grad) {
      Tensor gb({d.cout});
      for (std::int64_t r = 0; r < d.rows; ++r)
        for (int c = 0; c < d.cout; ++c) gb[c] += gout(r, c);
      bp->accumulate(gb);
    }
    if (wp->requires_grad) {
      MapConst col_m(col->data(), d.rows, d.cols);
      MapMat gw(wp->grad_data(), d.cout, d.cols);
      gw.noalias() += gout.transpose() * col_m;
    }
    if (xp->requires_grad) {
      RowMat gcol(d.rows, d.cols);
      MapConst w_m(wp->value.data(), d.cout, d.cols);
      gcol.noalias() = gout * w_m;
      Tensor gx(xp->value.shape());
      col2im_add(gcol.data(), d, stride, pad, gx);
      xp->accumulate(gx);
    }
  });
}

Var avg_pool2(const Var& x) {
  check_rank4(x, "avg_pool2");
  const auto& s = x->value.shape();
  if (s[2] % 2 != 0 || s[3] % 2 != 0)
    throw std::invalid_argument("avg_pool2: H and W must be even");
  const int n = s[0], c = s[1], h = s[2], w = s[3], oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->value.data() + static_cast<std::int64_t>(i) * h * w;
    double* dst = out.data() + static_cast<std::int64_t>(i) * oh * ow;
    for (int r = 0; r < oh; ++r)
      for (int cc = 0; cc < ow; ++cc)
        dst[r * ow + cc] = 0.25 * (src[2 * r * w + 2 * cc] + src[2 * r * w + 2 * cc + 1] +
                                   src[(2 * r + 1) * w + 2 * cc] +
                                   src[(2 * r + 1) * w + 2 * cc + 1]);
  }
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, c, h, w, oh, ow](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g(xp->value.shape());
    for (int i = 0; i < n * c; ++i) {
      double* dst = g.data() + static_cast<std::int64_t>(i) * h * w;
      const double* src = nd.grad.data() + static_cast<std::int64_t>(i) * oh * ow;
      for (int r = 0; r < oh; ++r)
        for (int cc = 0; cc < ow; ++cc) {
          const double v = 0.25 * src[r * ow + cc];
          dst[2 * r * w + 2 * cc] = v;
          dst[2 * r * w + 2 * cc + 1] = v;
          dst[(2 * r + 1) * w + 2 * cc] = v;
          dst[(2 * r + 1) * w + 2 * cc + 1] = v;
        }
    }
    xp->accumulate(g);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2 || w->value.rank() != 2 || b->value.rank() != 1)
    throw std::invalid_argument("linear: expected x (N,D), w (K,D), b (K)");
  const int n = x->value.dim(0), dIn = x->value.dim(1), k = w->value.dim(0);
  if (w->value.dim(1) != dIn || b->value.dim(0) != k)
    throw std::invalid_argument("linear: shape mismatch");
  Tensor out({n, k});
  {
    MapConst xm(x->value.data(), n, dIn);
    MapConst wm(w->value.data(), k, dIn);
    MapMat om(out.data(), n, k);
    om.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) out[static_cast<std::int64_t>(i) * k + j] += b->value[j];
  }
  Var xp = x, wp = w, bp = b;
  return make_node(std::move(out), {x, w, b}, [xp, wp, bp, n, dIn, k](Node& nd) {
    MapConst gm(nd.grad.data(), n, k);
    if (bp->requires_grad) {
      Tensor gb({k});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) gb[j] += nd.grad[static_cast<std::int64_t>(i) * k + j];
      bp->accumulate(gb);
    }
    if (wp->requires_grad) {
      MapConst xm(xp->value.data(), n, dIn);
      MapMat gw(wp->grad_data(), k, dIn);
      gw.noalias() += gm.transpose() * xm;
    }
    if (xp->requires_grad) {
      Tensor gx({n, dIn});
      MapConst wm(wp->value.data(), k, dIn);
      MapMat gxm(gx.data(), n, dIn);
      gxm.noalias() = gm * wm;
      xp->accumulate(gx);
    }
  });
}

Var softmax_rows(const Var& x) {
  if (x->value.rank() != 2) throw std::invalid_argument("softmax_rows: expected (N,K)");
  const int n = x->value.dim(0), k = x->value.dim(1);
  Tensor out({n, k});
  for (int i = 0; i < n; ++i) {
    const double* row = x->value.data() + static_cast<std::int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j)
      out[static_cast<std::int64_t>(i) * k + j] = std::exp(row[j] - mx) / sum;
  }
  Var xp = x;
  return make_node(std::move(out), {x}, [xp, n, k](Node& nd) {
    if (!xp->requires_grad) return;
    Tensor g({n, k});
    for (int i = 0; i < n; ++i) {
      const double* p = nd.value.data() + static_cast<std::int64_t>(i) * k;
      const double* go = nd.grad.data() + static_cast<std::int64_t>(i) * k;
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += go[j] * p[j];
      for (int j = 0; j < k; ++j) g[static_cast<std::int64_t>(i) * k + j] = p[j] * (go[j] - dot);
    }
    xp->accumulate(g);
  });
}

Var chamfer(const Var& a, const Var& b) {
  check_same_shape(a, b, "chamfer");
  check_rank4(a, "chamfer");
  const auto& s = a->value.shape();
  const int n = s[0], c = s[1];
  const int hw = s[2] * s[3];
  Tensor out({n});
  // Nearest-neighbor index per direction, memoized for the backward pass.
  auto nn_ab = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * hw);
  auto nn_ba = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * hw);

  const auto sqdist = [&](const double* xa, const double* xb, int i, int j) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double d = xa[static_cast<std::int64_t>(ch) * hw + i] -
                       xb[static_cast<std::int64_t>(ch) * hw + j];
      acc += d * d;
    }
    return acc;
  };

  for (int i = 0; i < n; ++i) {
    const double* pa = a->value.data() + static_cast<std::int64_t>(i) * c * hw;
    const double* pb = b->value.data() + static_cast<std::int64_t>(i) * c * hw;
    double total = 0.0;
    for (int p = 0; p < hw; ++p) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int q = 0; q < hw; ++q) {
        const double dd = sqdist(pa, pb, p, q);
        if (dd < best) {
          best = dd;
          arg = q;
        }
      }
      (*nn_ab)[static_cast<size_t>(i) * hw + p] = arg;
      total += best;
    }
    for (int p = 0; p < hw; ++p) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int q = 0; q < hw; ++q) {
        const double dd = sqdist(pb, pa, p, q);
        if (dd < best) {
          best = dd;
          arg = q;
        }
      }
      (*nn_ba)[static_cast<size_t>(i) * hw + p] = arg;
      total += best;
    }
    out[i] = total / (2.0 * hw);
  }

  Var ap = a, bp = b;
  return make_node(std::move(out), {a, b}, [ap, bp, nn_ab, nn_ba, n, c, hw](Node& nd) {
    Tensor ga(ap->value.shape());
    Tensor gb(bp->value.shape());
    for (int i = 0; i < n; ++i) {
      const double w = nd.grad[i] / (2.0 * hw);
      const double* pa = ap->value.data() + static_cast<std::int64_t>(i) * c * hw;
      const double* pb = bp->value.data() + static_cast<std::int64_t>(i) * c * hw;
      double* da = ga.data() + static_cast<std::int64_t>(i) * c * hw;
      double* db = gb.data() + static_cast<std::int64_t>(i) * c * hw;
      for (int p = 0; p < hw; ++p) {
        const int q = (*nn_ab)[static_cast<size_t>(i) * hw + p];
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t ia = static_cast<std::int64_t>(ch) * hw + p;
          const std::int64_t ib = static_cast<std::int64_t>(ch) * hw + q;
          const double diff = 2.0 * w * (pa[ia] - pb[ib]);
          da[ia] += diff;
          db[ib] -= diff;
        }
      }
      for (int p = 0; p < hw; ++p) {
        const int q = (*nn_ba)[static_cast<size_t>(i) * hw + p];
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t ib = static_cast<std::int64_t>(ch) * hw + p;
          const std::int64_t ia = static_cast<std::int64_t>(ch) * hw + q;
          const double diff = 2.0 * w * (pb[ib] - pa[ia]);
          db[ib] += diff;
          da[ia] -= diff;
        }
      }
    }
    if (ap->requires_grad) ap->accumulate(ga);
    if (bp->requires_grad) bp->accumulate(gb);
  });
}

// --- parameters --------------------------------------------------------------

Var ParamSet::add(const std::string& name, Tensor init) {
  items_.emplace_back(name, leaf(std::move(init), true));
  return items_.back().second;
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [name, v] : items_) out.push_back(v);
  return out;
}

void ParamSet::zero_grad() {
  for (auto& [name, v] : items_) v->grad.zero();
}

std::vector<Var> ParamSet::frozen() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [name, v] : items_) out.push_back(constant(v->value));
  return out;
}

std::int64_t ParamSet::count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : items_) n += v->value.numel();
  return n;
}

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Node& p = *params_[i];
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace cgn::ad
