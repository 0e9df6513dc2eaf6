#pragma once

// Minimal tape-based reverse-mode differentiation over dense matrices.
// Node ids are assigned in creation order, which is a topological order,
// so backward() is a single reverse sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tags/matrix.hpp"

namespace tags::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  inline const Matrix& value() const;
  inline const Matrix& grad() const;
  inline bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }
  Var parameter(Matrix value) { return push(std::move(value), true, {}); }

  /// Records an op result. The node needs a gradient iff one of its inputs does.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool rg = false;
    for (const Var& v : inputs) {
      check_owner(v);
      rg = rg || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), rg, rg ? std::move(backward) : Backward{});
  }
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
    bool rg = false;
    for (const Var& v : inputs) {
      check_owner(v);
      rg = rg || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), rg, rg ? std::move(backward) : Backward{});
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Matrix& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 root. Clears previously accumulated gradients.
  void backward(const Var& root) {
    check_owner(root);
    const Matrix& rv = nodes_[root.id()].value;
    if (rv.rows() != 1 || rv.cols() != 1) {
      throw std::invalid_argument("backward: root must be a 1x1 scalar, got " + shape_string(rv));
    }
    for (Node& n : nodes_) n.grad = Matrix();
    grad(root.id())(0, 0) = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

  void check_owner(const Var& v) const {
    if (v.tape_ != this) throw std::invalid_argument("Var belongs to a different tape");
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool rg, Backward bw) {
    nodes_.push_back(Node{std::move(value), Matrix(), rg, std::move(bw)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return static_cast<const Tape*>(tape_)->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void accumulate(Tape& tape, const Var& target, const Matrix& delta) {
  if (!target.requires_grad()) return;
  Matrix& g = tape.grad(target.id());
  auto gs = g.flat();
  auto ds = delta.flat();
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += ds[i];
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require(a.value().same_shape(b.value()), "add: shape mismatch");
  Matrix out = a.value();
  auto os = out.flat();
  auto bs = b.value().flat();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] += bs[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    detail::accumulate(t, a, g);
    detail::accumulate(t, b, g);
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  detail::require(a.value().same_shape(b.value()), "mul: shape mismatch");
  Matrix out = a.value();
  auto os = out.flat();
  auto bs = b.value().flat();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] *= bs[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix da = g, db = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da.flat()[i] *= b.value().flat()[i];
      db.flat()[i] *= a.value().flat()[i];
    }
    detail::accumulate(t, a, da);
    detail::accumulate(t, b, db);
  });
}

inline Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (double& v : out.flat()) v *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
    Matrix g = t.grad(self);
    for (double& v : g.flat()) v *= s;
    detail::accumulate(t, a, g);
  });
}

/// Adds a 1xC row vector to every row of a.
inline Var add_row_vector(const Var& a, const Var& bias) {
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  detail::require(bv.rows() == 1 && bv.cols() == av.cols(), "add_row_vector: bias shape mismatch");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  return a.tape().record(std::move(out), {a, bias}, [a, bias](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    detail::accumulate(t, a, g);
    if (bias.requires_grad()) {
      Matrix& gb = t.grad(bias.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
    }
  });
}

inline Matrix matmul_values(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Var matmul(const Var& a, const Var& b) {
  detail::require(a.value().cols() == b.value().rows(), "matmul: inner dimension mismatch");
  Matrix out = matmul_values(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    if (a.requires_grad()) detail::accumulate(t, a, matmul_values(g, b.value().transposed()));
    if (b.requires_grad()) detail::accumulate(t, b, matmul_values(a.value().transposed(), g));
  });
}

inline Var transpose(const Var& a) {
  return a.tape().record(a.value().transposed(), {a}, [a](Tape& t, std::size_t self) {
    detail::accumulate(t, a, t.grad(self).transposed());
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.flat()) v = 1.0 / (1.0 + std::exp(-v));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    Matrix g = t.grad(self);
    const Matrix& y = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) g.flat()[i] *= y.flat()[i] * (1.0 - y.flat()[i]);
    detail::accumulate(t, a, g);
  });
}

inline Var relu(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.flat()) v = v > 0.0 ? v : 0.0;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    Matrix g = t.grad(self);
    const Matrix& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.flat()[i] <= 0.0) g.flat()[i] = 0.0;
    detail::accumulate(t, a, g);
  });
}

inline Matrix softmax_rows_values(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (o[c] = std::exp(in[c] - mx));
    for (double& v : o) v /= z;
  }
  return out;
}

inline Var softmax_rows(const Var& a) {
  return a.tape().record(softmax_rows_values(a.value()), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    Matrix g = t.grad(self);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto yr = y.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < gr.size(); ++c) dot += gr[c] * yr[c];
      for (std::size_t c = 0; c < gr.size(); ++c) gr[c] = yr[c] * (gr[c] - dot);
    }
    detail::accumulate(t, a, g);
  });
}

/// Per-row layer normalization with learned 1xC gain and bias.
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  detail::require(gain.value().rows() == 1 && gain.value().cols() == n, "layer_norm: gain shape");
  detail::require(bias.value().rows() == 1 && bias.value().cols() == n, "layer_norm: bias shape");
  Matrix xhat(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  Matrix out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (in[c] - mean) * inv_std[r];
      out(r, c) = gain.value()(0, c) * xhat(r, c) + bias.value()(0, c);
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Matrix g = t.grad(self);
        const std::size_t n = g.cols();
        if (gain.requires_grad() || bias.requires_grad()) {
          Matrix dg(1, n), db(1, n);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) {
              dg(0, c) += g(r, c) * xhat(r, c);
              db(0, c) += g(r, c);
            }
          detail::accumulate(t, gain, dg);
          detail::accumulate(t, bias, db);
        }
        if (!x.requires_grad()) return;
        Matrix dx(g.rows(), n);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          std::vector<double> d(n);
          for (std::size_t c = 0; c < n; ++c) {
            d[c] = g(r, c) * gain.value()(0, c);
            mean_d += d[c];
            mean_dx += d[c] * xhat(r, c);
          }
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c)
            dx(r, c) = inv_std[r] * (d[c] - mean_d - xhat(r, c) * mean_dx);
        }
        detail::accumulate(t, x, dx);
      });
}

/// Temporal 1-D convolution with zero "same" padding. Input is T x Cin
/// (time-major); weight is (width*Cin) x Cout with row j*Cin+c holding tap j
/// of input channel c; bias is 1 x Cout.
inline Var conv1d_same(const Var& x, const Var& weight, const Var& bias, std::size_t width) {
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  const std::size_t T = xv.rows(), cin = xv.cols(), cout = wv.cols();
  detail::require(width % 2 == 1, "conv1d: width must be odd");
  detail::require(wv.rows() == width * cin, "conv1d: weight rows != width*Cin");
  detail::require(bias.value().rows() == 1 && bias.value().cols() == cout, "conv1d: bias shape");
  const long pad = static_cast<long>(width / 2);
  Matrix out(T, cout);
  for (std::size_t t = 0; t < T; ++t) {
    auto orow = out.row(t);
    for (std::size_t o = 0; o < cout; ++o) orow[o] = bias.value()(0, o);
    for (std::size_t j = 0; j < width; ++j) {
      const long src = static_cast<long>(t) + static_cast<long>(j) - pad;
      if (src < 0 || src >= static_cast<long>(T)) continue;
      auto xrow = xv.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < cin; ++c) {
        const double xc = xrow[c];
        if (xc == 0.0) continue;
        auto wrow = wv.row(j * cin + c);
        for (std::size_t o = 0; o < cout; ++o) orow[o] += xc * wrow[o];
      }
    }
  }
  return x.tape().record(std::move(out), {x, weight, bias}, [x, weight, bias, width, pad](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = x.value();
    const Matrix& wv = weight.value();
    const std::size_t T = xv.rows(), cin = xv.cols(), cout = wv.cols();
    if (bias.requires_grad()) {
      Matrix db(1, cout);
      for (std::size_t r = 0; r < T; ++r)
        for (std::size_t o = 0; o < cout; ++o) db(0, o) += g(r, o);
      detail::accumulate(t, bias, db);
    }
    const bool need_x = x.requires_grad(), need_w = weight.requires_grad();
    Matrix dx = need_x ? Matrix(T, cin) : Matrix();
    Matrix dw = need_w ? Matrix(wv.rows(), cout) : Matrix();
    for (std::size_t tt = 0; tt < T; ++tt) {
      auto grow = g.row(tt);
      for (std::size_t j = 0; j < width; ++j) {
        const long src = static_cast<long>(tt) + static_cast<long>(j) - pad;
        if (src < 0 || src >= static_cast<long>(T)) continue;
        auto xrow = xv.row(static_cast<std::size_t>(src));
        for (std::size_t c = 0; c < cin; ++c) {
          auto wrow = wv.row(j * cin + c);
          if (need_x) {
            double acc = 0.0;
            for (std::size_t o = 0; o < cout; ++o) acc += grow[o] * wrow[o];
            dx(static_cast<std::size_t>(src), c) += acc;
          }
          if (need_w) {
            auto dwrow = dw.row(j * cin + c);
            const double xc = xrow[c];
            for (std::size_t o = 0; o < cout; ++o) dwrow[o] += xc * grow[o];
          }
        }
      }
    }
    if (need_x) detail::accumulate(t, x, dx);
    if (need_w) detail::accumulate(t, weight, dw);
  });
}

inline std::size_t pooled_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const long span = static_cast<long>(length + 2 * pad) - static_cast<long>(kernel);
  if (span < 0) return 0;
  return static_cast<std::size_t>(span) / stride + 1;
}

/// Average pooling along rows with `pad` zero rows on both ends. Padding
/// rows count toward the window size.
inline Var avg_pool_rows(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  detail::require(kernel >= 1 && stride >= 1, "avg_pool: kernel and stride must be >= 1");
  const Matrix& xv = x.value();
  const std::size_t out_len = pooled_length(xv.rows(), kernel, stride, pad);
  detail::require(out_len >= 1, "avg_pool: output length < 1");
  const double inv_k = 1.0 / static_cast<double>(kernel);
  Matrix out(out_len, xv.cols());
  for (std::size_t i = 0; i < out_len; ++i) {
    for (std::size_t j = 0; j < kernel; ++j) {
      const long src = static_cast<long>(i * stride + j) - static_cast<long>(pad);
      if (src < 0 || src >= static_cast<long>(xv.rows())) continue;
      auto xr = xv.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < xv.cols(); ++c) out(i, c) += xr[c] * inv_k;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, kernel, stride, pad, inv_k](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const std::size_t rows = x.value().rows();
    Matrix dx(rows, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < kernel; ++j) {
        const long src = static_cast<long>(i * stride + j) - static_cast<long>(pad);
        if (src < 0 || src >= static_cast<long>(rows)) continue;
        for (std::size_t c = 0; c < g.cols(); ++c) dx(static_cast<std::size_t>(src), c) += g(i, c) * inv_k;
      }
    detail::accumulate(t, x, dx);
  });
}

inline Var gather_rows(const Var& x, std::vector<std::size_t> index) {
  const Matrix& xv = x.value();
  Matrix out(index.size(), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] < xv.rows(), "gather_rows: index out of range");
    auto src = xv.row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return x.tape().record(std::move(out), {x}, [x, index = std::move(index)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix dx(x.value().rows(), g.cols());
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) dx(index[i], c) += g(i, c);
    detail::accumulate(t, x, dx);
  });
}

inline Var slice_cols(const Var& x, std::size_t first, std::size_t count) {
  const Matrix& xv = x.value();
  detail::require(first + count <= xv.cols(), "slice_cols: range out of bounds");
  Matrix out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, first + c);
  return x.tape().record(std::move(out), {x}, [x, first, count](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix dx(x.value().rows(), x.value().cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) dx(r, first + c) = g(r, c);
    detail::accumulate(t, x, dx);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    detail::require(p.value().rows() == rows, "concat_cols: row mismatch");
    cols += p.value().cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    off += pv.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t pc = p.value().cols();
      if (p.requires_grad()) {
        Matrix d(g.rows(), pc);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) d(r, c) = g(r, off + c);
        detail::accumulate(t, p, d);
      }
      off += pc;
    }
  });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().flat()) s += v;
  return x.tape().record(Matrix(1, 1, s), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    detail::accumulate(t, x, Matrix(x.value().rows(), x.value().cols(), g));
  });
}

/// Scalar node whose value and local gradients were computed elsewhere
/// (fused loss terms). `local_grads[i]` is d(value)/d(inputs[i]).
inline Var fused_scalar(const std::vector<Var>& inputs, double value, std::vector<Matrix> local_grads) {
  detail::require(!inputs.empty() && inputs.size() == local_grads.size(), "fused_scalar: arity mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    detail::require(inputs[i].value().same_shape(local_grads[i]), "fused_scalar: gradient shape mismatch");
  return inputs.front().tape().record(
      Matrix(1, 1, value), inputs, [inputs, local_grads = std::move(local_grads)](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (!inputs[i].requires_grad()) continue;
          Matrix d = local_grads[i];
          for (double& v : d.flat()) v *= g;
          detail::accumulate(t, inputs[i], d);
        }
      });
}

}  // namespace tags::ad
