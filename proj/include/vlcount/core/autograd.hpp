#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "vlcount/core/tensor_math.hpp"

namespace vlcount {

/// Reverse-mode autodiff on a dynamic tape. Nodes are built by the free
/// functions below; backward() walks the graph in reverse topological order.
/// Ops whose inputs carry no gradient produce detached constant nodes, so
/// frozen computations never grow the tape.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void accumulate(const Tensor& g) {
    if (grad.empty()) grad = Tensor(value.shape());
    grad.add_(g);
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(n);
  }

  static Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(n);
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }

  void zero_grad() {
    if (node_) node_->grad = Tensor();
  }

  /// Backpropagate from a scalar output.
  void backward() const {
    if (node_->value.size() != 1) {
      throw std::logic_error("backward: output must be a scalar, got " +
                             node_->value.shape_str());
    }
    if (!node_->requires_grad) return;

    // Post-order DFS over the gradient-carrying subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->accumulate(Tensor::full({1}, 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
  }

 private:
  NodePtr node_;
};

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> inputs,
                   std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& v : inputs) {
    if (v.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const Var& v : inputs) n->parents.push_back(v.node());
    n->backprop = std::move(backprop);
  }
  return Var(n);
}

}  // namespace detail

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_(b.value());
  return detail::make_op(std::move(out), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (long long i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    Tensor neg = self.grad;
    neg.scale_(-1.0);
    self.parents[1]->accumulate(neg);
  });
}

inline Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (long long i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    Tensor ga = self.grad;
    for (long long i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
    self.parents[0]->accumulate(ga);
    Tensor gb = self.grad;
    for (long long i = 0; i < gb.size(); ++i) gb[i] *= av[i];
    self.parents[1]->accumulate(gb);
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out.scale_(s);
  return detail::make_op(std::move(out), {a}, [s](Node& self) {
    Tensor g = self.grad;
    g.scale_(s);
    self.parents[0]->accumulate(g);
  });
}

inline Var relu(const Var& a) {
  Tensor out = a.value();
  for (long long i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return detail::make_op(std::move(out), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor g = self.grad;
    for (long long i = 0; i < g.size(); ++i) {
      if (x[i] <= 0.0) g[i] = 0.0;
    }
    self.parents[0]->accumulate(g);
  });
}

inline Var leaky_relu(const Var& a, double slope = 0.01) {
  Tensor out = a.value();
  for (long long i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) out[i] *= slope;
  }
  return detail::make_op(std::move(out), {a}, [slope](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor g = self.grad;
    for (long long i = 0; i < g.size(); ++i) {
      if (x[i] < 0.0) g[i] *= slope;
    }
    self.parents[0]->accumulate(g);
  });
}

inline Var tanh_op(const Var& a) {
  Tensor out = a.value();
  for (long long i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return detail::make_op(std::move(out), {a}, [](Node& self) {
    const Tensor& y = self.value;
    Tensor g = self.grad;
    for (long long i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
    self.parents[0]->accumulate(g);
  });
}

inline Var sqrt_op(const Var& a) {
  Tensor out = a.value();
  for (long long i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  return detail::make_op(std::move(out), {a}, [](Node& self) {
    const Tensor& y = self.value;
    Tensor g = self.grad;
    for (long long i = 0; i < g.size(); ++i) {
      g[i] = y[i] > 0.0 ? g[i] * 0.5 / y[i] : 0.0;  // subgradient 0 at the origin
    }
    self.parents[0]->accumulate(g);
  });
}

// ---- linear algebra ----

inline Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  return detail::make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor ga({m, k});
    as_mat(ga, m, k).noalias() = as_mat(self.grad, m, n) * as_mat(bv, k, n).transpose();
    self.parents[0]->accumulate(ga);
    Tensor gb({k, n});
    as_mat(gb, k, n).noalias() = as_mat(av, m, k).transpose() * as_mat(self.grad, m, n);
    self.parents[1]->accumulate(gb);
  });
}

inline Var transpose(const Var& a) {
  Tensor out = transpose(a.value());
  return detail::make_op(std::move(out), {a}, [](Node& self) {
    self.parents[0]->accumulate(transpose(self.grad));
  });
}

/// m {r,c} + broadcast row vector v {c}.
inline Var add_rowvec(const Var& m, const Var& v) {
  const int r = m.value().dim(0), c = m.value().dim(1);
  if (v.value().size() != c) {
    throw std::invalid_argument("add_rowvec: vector length mismatch");
  }
  Tensor out = m.value();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out.at(i, j) += v.value()[j];
  }
  return detail::make_op(std::move(out), {m, v}, [r, c](Node& self) {
    self.parents[0]->accumulate(self.grad);
    Tensor gv(self.parents[1]->value.shape());
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) gv[j] += self.grad.at(i, j);
    }
    self.parents[1]->accumulate(gv);
  });
}

inline Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a.value().reshaped(shape);
  return detail::make_op(std::move(out), {a}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
  });
}

inline Var sum_all(const Var& a) {
  Tensor out = Tensor::scalar(a.value().sum());
  return detail::make_op(std::move(out), {a}, [](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    g.fill(self.grad[0]);
    self.parents[0]->accumulate(g);
  });
}

inline Var softmax_rows(const Var& a) {
  const int r = a.value().dim(0), c = a.value().dim(1);
  Tensor out = a.value();
  for (int i = 0; i < r; ++i) {
    double mx = -1e300;
    for (int j = 0; j < c; ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
  }
  return detail::make_op(std::move(out), {a}, [r, c](Node& self) {
    const Tensor& y = self.value;
    Tensor g(self.parents[0]->value.shape());
    for (int i = 0; i < r; ++i) {
      double dotgy = 0.0;
      for (int j = 0; j < c; ++j) dotgy += self.grad.at(i, j) * y.at(i, j);
      for (int j = 0; j < c; ++j) {
        g.at(i, j) = y.at(i, j) * (self.grad.at(i, j) - dotgy);
      }
    }
    self.parents[0]->accumulate(g);
  });
}

/// Row-wise layer normalization with learnable gain/bias over the last axis.
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias,
                           double eps = 1e-5) {
  const int r = x.value().dim(0), c = x.value().dim(1);
  Tensor xhat({r, c});
  Tensor inv_sigma({r});
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += x.value().at(i, j);
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = x.value().at(i, j) - mean;
      var += d * d;
    }
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (int j = 0; j < c; ++j) {
      double xh = (x.value().at(i, j) - mean) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = gain.value()[j] * xh + bias.value()[j];
    }
  }
  return detail::make_op(
      std::move(out), {x, gain, bias},
      [r, c, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& self) {
        const Tensor& gamma = self.parents[1]->value;
        Tensor gx({r, c});
        Tensor ggamma({c});
        Tensor gbeta({c});
        for (int i = 0; i < r; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int j = 0; j < c; ++j) {
            double go = self.grad.at(i, j);
            double dxh = go * gamma[j];
            ggamma[j] += go * xhat.at(i, j);
            gbeta[j] += go;
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat.at(i, j);
          }
          mean_dxhat /= c;
          mean_dxhat_xhat /= c;
          for (int j = 0; j < c; ++j) {
            double dxh = self.grad.at(i, j) * gamma[j];
            gx.at(i, j) =
                inv_sigma[i] * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
          }
        }
        self.parents[0]->accumulate(gx);
        self.parents[1]->accumulate(ggamma);
        self.parents[2]->accumulate(gbeta);
      });
}

// ---- slicing / concatenation ----

inline Var slice_rows(const Var& a, int r0, int r1) {
  const int c = a.value().dim(1);
  Tensor out({r1 - r0, c});
  std::copy(a.value().data() + static_cast<size_t>(r0) * c,
            a.value().data() + static_cast<size_t>(r1) * c, out.data());
  return detail::make_op(std::move(out), {a}, [r0, r1, c](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    std::copy(self.grad.data(), self.grad.data() + static_cast<size_t>(r1 - r0) * c,
              g.data() + static_cast<size_t>(r0) * c);
    self.parents[0]->accumulate(g);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  const int c = parts.front().value().dim(1);
  int rows = 0;
  for (const Var& p : parts) rows += p.value().dim(0);
  Tensor out({rows, c});
  double* dst = out.data();
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), dst);
    dst += p.value().size();
  }
  return detail::make_op(std::move(out), parts, [](Node& self) {
    const double* src = self.grad.data();
    for (auto& parent : self.parents) {
      Tensor g(parent->value.shape());
      std::copy(src, src + g.size(), g.data());
      src += g.size();
      parent->accumulate(g);
    }
  });
}

inline Var slice_cols(const Var& a, int c0, int c1) {
  const int r = a.value().dim(0);
  Tensor out({r, c1 - c0});
  for (int i = 0; i < r; ++i) {
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = a.value().at(i, j);
  }
  return detail::make_op(std::move(out), {a}, [r, c0, c1](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    for (int i = 0; i < r; ++i) {
      for (int j = c0; j < c1; ++j) g.at(i, j) = self.grad.at(i, j - c0);
    }
    self.parents[0]->accumulate(g);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  const int r = parts.front().value().dim(0);
  int cols = 0;
  for (const Var& p : parts) cols += p.value().dim(1);
  Tensor out({r, cols});
  int off = 0;
  for (const Var& p : parts) {
    const int pc = p.value().dim(1);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < pc; ++j) out.at(i, off + j) = p.value().at(i, j);
    }
    off += pc;
  }
  return detail::make_op(std::move(out), parts, [r](Node& self) {
    int off = 0;
    for (auto& parent : self.parents) {
      const int pc = parent->value.dim(1);
      Tensor g(parent->value.shape());
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < pc; ++j) g.at(i, j) = self.grad.at(i, off + j);
      }
      off += pc;
      parent->accumulate(g);
    }
  });
}

/// Mean over a subset of rows -> {1, cols}. Rows may appear once each.
inline Var rows_mean_subset(const Var& a, std::vector<int> rows) {
  if (rows.empty()) throw std::invalid_argument("rows_mean_subset: empty row set");
  const int c = a.value().dim(1);
  Tensor out({1, c});
  for (int r : rows) {
    for (int j = 0; j < c; ++j) out.at(0, j) += a.value().at(r, j);
  }
  out.scale_(1.0 / static_cast<double>(rows.size()));
  return detail::make_op(std::move(out), {a}, [rows = std::move(rows), c](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (int r : rows) {
      for (int j = 0; j < c; ++j) g.at(r, j) = self.grad.at(0, j) * inv;
    }
    self.parents[0]->accumulate(g);
  });
}

// ---- spatial ops on {c,h,w} ----

/// 2-D convolution, stride 1, zero padding; weight {cout, cin*kh*kw},
/// bias {cout}. Backward recomputes the im2col buffer instead of caching it.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int kh, int kw,
                  int pad) {
  const int cin = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  const int cout = weight.value().dim(0);
  Tensor cols = im2col(x.value(), kh, kw, pad);
  Tensor out({cout, h, w});
  as_mat(out, cout, h * w).noalias() =
      as_mat(weight.value(), cout, cin * kh * kw) *
      as_mat(cols, h * w, cin * kh * kw).transpose();
  for (int oc = 0; oc < cout; ++oc) {
    double b = bias.value()[oc];
    double* plane = out.data() + static_cast<size_t>(oc) * h * w;
    for (int i = 0; i < h * w; ++i) plane[i] += b;
  }
  return detail::make_op(
      std::move(out), {x, weight, bias}, [cin, h, w, cout, kh, kw, pad](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        Tensor cols = im2col(xv, kh, kw, pad);

        Tensor gw({cout, cin * kh * kw});
        as_mat(gw, cout, cin * kh * kw).noalias() =
            as_mat(self.grad, cout, h * w) * as_mat(cols, h * w, cin * kh * kw);
        self.parents[1]->accumulate(gw);

        Tensor gb({cout});
        for (int oc = 0; oc < cout; ++oc) {
          const double* plane = self.grad.data() + static_cast<size_t>(oc) * h * w;
          double s = 0.0;
          for (int i = 0; i < h * w; ++i) s += plane[i];
          gb[oc] = s;
        }
        self.parents[2]->accumulate(gb);

        Tensor gcols({h * w, cin * kh * kw});
        as_mat(gcols, h * w, cin * kh * kw).noalias() =
            as_mat(self.grad, cout, h * w).transpose() *
            as_mat(wv, cout, cin * kh * kw);
        self.parents[0]->accumulate(col2im(gcols, cin, h, w, kh, kw, pad));
      });
}

namespace detail {

struct LerpIndex {
  int i0, i1;
  double w1;  // weight on i1; (1 - w1) on i0
};

inline std::vector<LerpIndex> upsample2x_indices(int in_size) {
  std::vector<LerpIndex> v(2 * in_size);
  for (int o = 0; o < 2 * in_size; ++o) {
    double f = (o + 0.5) * 0.5 - 0.5;
    int i0 = static_cast<int>(std::floor(f));
    double w1 = f - i0;
    v[o] = {std::clamp(i0, 0, in_size - 1), std::clamp(i0 + 1, 0, in_size - 1), w1};
  }
  return v;
}

}  // namespace detail

/// Bilinear 2x upsampling of {c,h,w} (half-pixel centers).
inline Var upsample2x(const Var& x) {
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  auto ys = detail::upsample2x_indices(h);
  auto xs = detail::upsample2x_indices(w);
  Tensor out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const auto& ly = ys[oy];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto& lx = xs[ox];
        double v00 = x.value().at(ch, ly.i0, lx.i0), v01 = x.value().at(ch, ly.i0, lx.i1);
        double v10 = x.value().at(ch, ly.i1, lx.i0), v11 = x.value().at(ch, ly.i1, lx.i1);
        out.at(ch, oy, ox) = (1 - ly.w1) * ((1 - lx.w1) * v00 + lx.w1 * v01) +
                             ly.w1 * ((1 - lx.w1) * v10 + lx.w1 * v11);
      }
    }
  }
  return detail::make_op(std::move(out), {x},
                         [c, h, w, ys = std::move(ys), xs = std::move(xs)](Node& self) {
                           Tensor g({c, h, w});
                           for (int ch = 0; ch < c; ++ch) {
                             for (int oy = 0; oy < 2 * h; ++oy) {
                               const auto& ly = ys[oy];
                               for (int ox = 0; ox < 2 * w; ++ox) {
                                 const auto& lx = xs[ox];
                                 double go = self.grad.at(ch, oy, ox);
                                 g.at(ch, ly.i0, lx.i0) += (1 - ly.w1) * (1 - lx.w1) * go;
                                 g.at(ch, ly.i0, lx.i1) += (1 - ly.w1) * lx.w1 * go;
                                 g.at(ch, ly.i1, lx.i0) += ly.w1 * (1 - lx.w1) * go;
                                 g.at(ch, ly.i1, lx.i1) += ly.w1 * lx.w1 * go;
                               }
                             }
                           }
                           self.parents[0]->accumulate(g);
                         });
}

// ---- small conveniences ----

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

/// || a - b ||_2 as a scalar Var (subgradient 0 at coincidence).
inline Var euclidean_distance(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return sqrt_op(sum_all(mul(d, d)));
}

inline Var squared_distance(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return sum_all(mul(d, d));
}

}  // namespace vlcount
