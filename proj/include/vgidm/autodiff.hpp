#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vgidm/tensor.hpp"

namespace vgidm {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(Tensor::zeros_like(value)) {}
};

/// Named parameters in a stable (lexicographic) order.
class ParamSet {
 public:
  Parameter& add(const std::string& name, Tensor value) {
    auto [it, inserted] = params_.insert_or_assign(name, Parameter(std::move(value)));
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Parameter& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(0.0);
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

/**
 * Reverse-mode tape. Nodes are appended in evaluation order, so walking the
 * node list backwards visits them in reverse topological order.
 */
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Var constant(Tensor v) { return push(std::move(v), {}, nullptr, false); }

  /// Differentiable input whose gradient is read back with grad().
  Var leaf(Tensor v) { return push(std::move(v), {}, nullptr, true); }

  /// Parameter leaf; backward() accumulates into p.grad. Repeated calls with
  /// the same parameter return the same node.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
      return Var{this, it->second};
    }
    Var v = push(p.value, {}, nullptr, true);
    param_nodes_.emplace(&p, v.id);
    param_sinks_.emplace_back(v.id, &p);
    return v;
  }

  Var record(Tensor value, std::vector<std::uint32_t> inputs, Backward fn) {
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(fn) : nullptr, needs);
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::uint32_t>& inputs(std::uint32_t id) const { return nodes_[id].inputs; }

  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }
  Tensor& grad(Var v) { return grad(v.id); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf and parameter.
  void backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: variable from another tape");
    if (value(loss).size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + value(loss).describe());
    }
    grad(loss.id)[0] += 1.0;
    for (std::uint32_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
    for (auto [id, p] : param_sinks_) {
      auto& n = nodes_[id];
      if (!n.grad.empty()) p->grad += n.grad;
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Tensor v, std::vector<std::uint32_t> inputs, Backward fn, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), Tensor{}, std::move(inputs), std::move(fn), needs_grad});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
  std::vector<std::pair<std::uint32_t, Parameter*>> param_sinks_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace ops {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline std::string shapes(const char* op, const Var& a, const Var& b) {
  return std::string(op) + ": lhs " + a.value().describe() + " vs rhs " + b.value().describe();
}

/// Accumulates g into the gradient of input node `id` when it is differentiable.
template <typename F>
void accumulate(Tape& t, std::uint32_t id, F&& f) {
  if (t.requires_grad(id)) f(t.grad(id));
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return t.record(std::move(out), {x.id}, [deriv](Tape& tp, std::uint32_t self) {
    const auto in = tp.inputs(self)[0];
    const Tensor& xv = tp.value(in);
    const Tensor& yv = tp.value(self);
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(in);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::require(a.value().same_shape(b.value()), detail::shapes("add", a, b));
  Tensor out = a.value();
  out += b.value();
  return a.tape->record(std::move(out), {a.id, b.id}, [](Tape& t, std::uint32_t self) {
    const auto& in = t.inputs(self);
    for (auto id : in) detail::accumulate(t, id, [&](Tensor& g) { g += t.grad(self); });
  });
}

inline Var sub(Var a, Var b) {
  detail::require(a.value().same_shape(b.value()), detail::shapes("sub", a, b));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const Tensor& g = t.grad(self);
    detail::accumulate(t, in[0], [&](Tensor& ga) { ga += g; });
    detail::accumulate(t, in[1], [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require(a.value().same_shape(b.value()), detail::shapes("mul", a, b));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(in[0]);
    const Tensor& bv = t.value(in[1]);
    detail::accumulate(t, in[0], [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    });
    detail::accumulate(t, in[1], [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  out *= s;
  return a.tape->record(std::move(out), {a.id}, [s](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(t.inputs(self)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

/// s - a, elementwise.
inline Var rsub_scalar(double s, Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = s - v;
  return a.tape->record(std::move(out), {a.id}, [](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(t.inputs(self)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

/// Sum of same-shaped tensors.
inline Var add_n(const std::vector<Var>& xs) {
  detail::require(!xs.empty(), "add_n: no operands");
  Tensor out = xs.front().value();
  std::vector<std::uint32_t> ids{xs.front().id};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    detail::require(xs[k].value().same_shape(out), detail::shapes("add_n", xs[0], xs[k]));
    out += xs[k].value();
    ids.push_back(xs[k].id);
  }
  return xs.front().tape->record(std::move(out), std::move(ids), [](Tape& t, std::uint32_t self) {
    for (auto id : t.inputs(self)) detail::accumulate(t, id, [&](Tensor& g) { g += t.grad(self); });
  });
}

inline Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  return a.tape->record(Tensor::scalar(s), {a.id}, [](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(t.inputs(self)[0]).data()) v += g;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Matrix product of rank-2 tensors.
inline Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
                  detail::shapes("matmul", a, b));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  }
  return a.tape->record(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const Tensor& G = t.grad(self);
    const Tensor& A = t.value(in[0]);
    const Tensor& B = t.value(in[1]);
    detail::accumulate(t, in[0], [&](Tensor& gA) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G.at(i, j) * B.at(p, j);
          gA.at(i, p) += s;
        }
    });
    detail::accumulate(t, in[1], [&](Tensor& gB) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A.at(i, p);
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gB.at(p, j) += aip * G.at(i, j);
        }
    });
  });
}

inline Var transpose(Var a) {
  const Tensor& A = a.value();
  detail::require(A.rank() == 2, "transpose: expected matrix, got " + A.describe());
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
  return a.tape->record(std::move(out), {a.id}, [m, n](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& gA = t.grad(t.inputs(self)[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gA.at(i, j) += G.at(j, i);
  });
}

/// Inner product of two vectors (any shapes with equal element count).
inline Var dot(Var a, Var b) {
  detail::require(a.size() == b.size(), detail::shapes("dot", a, b));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  return a.tape->record(Tensor::scalar(s), {a.id, b.id}, [](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const double g = t.grad(self)[0];
    const Tensor& av = t.value(in[0]);
    const Tensor& bv = t.value(in[1]);
    detail::accumulate(t, in[0], [&](Tensor& ga) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
    });
    detail::accumulate(t, in[1], [&](Tensor& gb) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
    });
  });
}

/**
 * a^T M b for a in R^p, M in R^{p x q}, b in R^q.
 * Gradients: d/da = M b, d/db = M^T a, d/dM = a b^T.
 */
inline Var bilinear(Var a, Var M, Var b) {
  const Tensor& av = a.value();
  const Tensor& Mv = M.value();
  const Tensor& bv = b.value();
  if (Mv.rank() != 2 || av.size() != Mv.rows() || bv.size() != Mv.cols()) {
    throw ShapeError("bilinear: a " + av.describe() + ", M " + Mv.describe() + ", b " +
                     bv.describe() + " do not conform");
  }
  const std::size_t p = Mv.rows(), q = Mv.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    if (av[i] == 0.0) continue;
    double row = 0.0;
    for (std::size_t j = 0; j < q; ++j) row += Mv.at(i, j) * bv[j];
    s += av[i] * row;
  }
  return a.tape->record(Tensor::scalar(s), {a.id, M.id, b.id}, [p, q](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const double g = t.grad(self)[0];
    const Tensor& av = t.value(in[0]);
    const Tensor& Mv = t.value(in[1]);
    const Tensor& bv = t.value(in[2]);
    detail::accumulate(t, in[0], [&](Tensor& ga) {
      for (std::size_t i = 0; i < p; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < q; ++j) row += Mv.at(i, j) * bv[j];
        ga[i] += g * row;
      }
    });
    detail::accumulate(t, in[1], [&](Tensor& gM) {
      for (std::size_t i = 0; i < p; ++i) {
        if (av[i] == 0.0) continue;
        for (std::size_t j = 0; j < q; ++j) gM.at(i, j) += g * av[i] * bv[j];
      }
    });
    detail::accumulate(t, in[2], [&](Tensor& gb) {
      for (std::size_t i = 0; i < p; ++i) {
        if (av[i] == 0.0) continue;
        for (std::size_t j = 0; j < q; ++j) gb[j] += g * av[i] * Mv.at(i, j);
      }
    });
  });
}

/// Numerically stable logistic function.
inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var x) {
  return detail::unary(x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(Var x) {
  return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// ELU with alpha = 1.
inline Var elu(Var x) {
  return detail::unary(x, [](double v) { return v >= 0.0 ? v : std::expm1(v); },
                       [](double v, double y) { return v >= 0.0 ? 1.0 : y + 1.0; });
}

inline Var leaky_relu(Var x, double slope) {
  return detail::unary(x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
                       [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

inline Var exp(Var x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

/// Natural log; inputs must be positive.
inline Var log(Var x) {
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// Clamp to [lo, hi]; zero gradient outside the interval.
inline Var clamp(Var x, double lo, double hi) {
  return detail::unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
                       [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

/// Euclidean norm. The gradient at the origin is taken as zero.
inline Var l2_norm(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return x.tape->record(Tensor::scalar(std::sqrt(s)), {x.id}, [](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self)[0];
    const double norm = t.value(self)[0];
    if (norm == 0.0) return;
    const double g = t.grad(self)[0];
    const Tensor& xv = t.value(in);
    Tensor& gx = t.grad(in);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g * xv[i] / norm;
  });
}

/// Cosine similarity; eps guards against zero-length vectors.
inline Var cosine(Var a, Var b, double eps = 1e-12) {
  detail::require(a.size() == b.size(), detail::shapes("cosine", a, b));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa) + eps, nb = std::sqrt(bb) + eps;
  return a.tape->record(
      Tensor::scalar(ab / (na * nb)), {a.id, b.id}, [ab, na, nb, eps](Tape& t, std::uint32_t self) {
        const auto in = t.inputs(self);
        const double g = t.grad(self)[0];
        const Tensor& av = t.value(in[0]);
        const Tensor& bv = t.value(in[1]);
        // c = ab / (na nb), na = |a| + eps
        auto push = [&](std::uint32_t id, const Tensor& self_v, const Tensor& other_v, double n_self,
                        double n_other) {
          detail::accumulate(t, id, [&](Tensor& gx) {
            const double raw = n_self - eps;
            for (std::size_t i = 0; i < gx.size(); ++i) {
              double d = other_v[i] / (n_self * n_other);
              if (raw > 0.0) d -= ab / (n_self * n_self * n_other) * self_v[i] / raw;
              gx[i] += g * d;
            }
          });
        };
        push(in[0], av, bv, na, nb);
        push(in[1], bv, av, nb, na);
      });
}

/// Concatenates vectors end to end.
inline Var concat(const std::vector<Var>& xs) {
  detail::require(!xs.empty(), "concat: no operands");
  std::vector<double> data;
  std::vector<std::uint32_t> ids;
  for (const auto& x : xs) {
    data.insert(data.end(), x.value().data().begin(), x.value().data().end());
    ids.push_back(x.id);
  }
  return xs.front().tape->record(Tensor::vector(std::move(data)), std::move(ids),
                                 [](Tape& t, std::uint32_t self) {
                                   const Tensor& g = t.grad(self);
                                   std::size_t off = 0;
                                   for (auto id : t.inputs(self)) {
                                     const std::size_t len = t.value(id).size();
                                     detail::accumulate(t, id, [&](Tensor& gx) {
                                       for (std::size_t i = 0; i < len; ++i) gx[i] += g[off + i];
                                     });
                                     off += len;
                                   }
                                 });
}

/// Contiguous sub-vector [offset, offset + len).
inline Var slice(Var x, std::size_t offset, std::size_t len) {
  detail::require(offset + len <= x.size(), "slice: range exceeds " + x.value().describe());
  std::vector<double> data(x.value().data().begin() + static_cast<std::ptrdiff_t>(offset),
                           x.value().data().begin() + static_cast<std::ptrdiff_t>(offset + len));
  return x.tape->record(Tensor::vector(std::move(data)), {x.id}, [offset, len](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(t.inputs(self)[0]);
    for (std::size_t i = 0; i < len; ++i) gx[offset + i] += g[i];
  });
}

/// Stacks equal-length vectors as the rows of a matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  detail::require(!rows.empty(), "stack_rows: no rows");
  const std::size_t n = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * n);
  std::vector<std::uint32_t> ids;
  for (const auto& r : rows) {
    detail::require(r.size() == n, detail::shapes("stack_rows", rows.front(), r));
    data.insert(data.end(), r.value().data().begin(), r.value().data().end());
    ids.push_back(r.id);
  }
  return rows.front().tape->record(Tensor::matrix(rows.size(), n, std::move(data)), std::move(ids),
                                   [n](Tape& t, std::uint32_t self) {
                                     const Tensor& g = t.grad(self);
                                     const auto& in = t.inputs(self);
                                     for (std::size_t r = 0; r < in.size(); ++r) {
                                       detail::accumulate(t, in[r], [&](Tensor& gx) {
                                         for (std::size_t j = 0; j < n; ++j) gx[j] += g[r * n + j];
                                       });
                                     }
                                   });
}

inline Var row(Var X, std::size_t r) {
  const Tensor& xv = X.value();
  detail::require(xv.rank() == 2 && r < xv.rows(), "row: index out of range for " + xv.describe());
  const std::size_t n = xv.cols();
  return slice(X, r * n, n);
}

/// Column-wise concatenation [A | B] of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& xs) {
  detail::require(!xs.empty(), "concat_cols: no operands");
  const std::size_t m = xs.front().value().rows();
  std::size_t total = 0;
  std::vector<std::uint32_t> ids;
  for (const auto& x : xs) {
    detail::require(x.value().rank() == 2 && x.value().rows() == m, detail::shapes("concat_cols", xs[0], x));
    total += x.value().cols();
    ids.push_back(x.id);
  }
  Tensor out({m, total});
  std::size_t off = 0;
  for (const auto& x : xs) {
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < xv.cols(); ++j) out.at(i, off + j) = xv.at(i, j);
    off += xv.cols();
  }
  return xs.front().tape->record(std::move(out), std::move(ids), [m](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (auto id : t.inputs(self)) {
      const std::size_t c = t.value(id).cols();
      detail::accumulate(t, id, [&](Tensor& gx) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += g.at(i, off + j);
      });
      off += c;
    }
  });
}

/// Mean over the rows of a matrix.
inline Var mean_rows(Var X) {
  const Tensor& xv = X.value();
  detail::require(xv.rank() == 2 && xv.rows() > 0, "mean_rows: expected non-empty matrix, got " + xv.describe());
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv.at(i, j);
  out *= 1.0 / static_cast<double>(m);
  return X.tape->record(std::move(out), {X.id}, [m, n](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(t.inputs(self)[0]);
    const double w = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += w * g[j];
  });
}

/// Column-wise max over rows; the gradient goes to the first arg-max.
inline Var max_rows(Var X) {
  const Tensor& xv = X.value();
  detail::require(xv.rank() == 2 && xv.rows() > 0, "max_rows: expected non-empty matrix, got " + xv.describe());
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({n});
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = xv.at(0, j);
    for (std::size_t i = 1; i < m; ++i)
      if (xv.at(i, j) > out[j]) {
        out[j] = xv.at(i, j);
        arg[j] = i;
      }
  }
  return X.tape->record(std::move(out), {X.id}, [arg, n](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(t.inputs(self)[0]);
    for (std::size_t j = 0; j < n; ++j) gx.at(arg[j], j) += g[j];
  });
}

/// out[i][j] = u[i] + v[j] for column vectors u, v of shape m x 1.
inline Var outer_sum(Var u, Var v) {
  const Tensor& uv = u.value();
  const Tensor& vv = v.value();
  detail::require(uv.size() == vv.size(), detail::shapes("outer_sum", u, v));
  const std::size_t m = uv.size();
  Tensor out({m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = uv[i] + vv[j];
  return u.tape->record(std::move(out), {u.id, v.id}, [m](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const Tensor& g = t.grad(self);
    detail::accumulate(t, in[0], [&](Tensor& gu) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) gu[i] += g.at(i, j);
    });
    detail::accumulate(t, in[1], [&](Tensor& gv) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) gv[j] += g.at(i, j);
    });
  });
}

/**
 * Row-wise softmax restricted to entries where mask != 0; masked-out entries
 * are exactly zero. Every row must have at least one active entry.
 */
inline Var masked_softmax_rows(Var E, const Tensor& mask) {
  const Tensor& ev = E.value();
  detail::require(ev.rank() == 2 && ev.same_shape(mask),
                  "masked_softmax_rows: scores " + ev.describe() + " vs mask " + mask.describe());
  const std::size_t m = ev.rows(), n = ev.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask.at(i, j) != 0.0) mx = std::max(mx, ev.at(i, j));
    detail::require(std::isfinite(mx), "masked_softmax_rows: row " + std::to_string(i) + " has no entries");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask.at(i, j) != 0.0) z += (out.at(i, j) = std::exp(ev.at(i, j) - mx));
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  return E.tape->record(std::move(out), {E.id}, [m, n](Tape& t, std::uint32_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ge = t.grad(t.inputs(self)[0]);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < n; ++j) ge.at(i, j) += y.at(i, j) * (g.at(i, j) - s);
    }
  });
}

/// Adds bias vector b to every row of X.
inline Var add_row_bias(Var X, Var b) {
  const Tensor& xv = X.value();
  detail::require(xv.rank() == 2 && b.size() == xv.cols(), detail::shapes("add_row_bias", X, b));
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += b.value()[j];
  return X.tape->record(std::move(out), {X.id, b.id}, [m, n](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const Tensor& g = t.grad(self);
    detail::accumulate(t, in[0], [&](Tensor& gx) { gx += g; });
    detail::accumulate(t, in[1], [&](Tensor& gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
    });
  });
}

/// Reinterprets the data of x under a new shape with the same element count.
inline Var reshape(Var x, Tensor::Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x.id}, [](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(t.inputs(self)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/**
 * 2-D convolution of X (C x H x W) with kernels K (O x C x k x k) and bias
 * (O), zero padding `pad` and stride `stride`.
 */
inline Var conv2d(Var X, Var K, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor& xv = X.value();
  const Tensor& kv = K.value();
  if (xv.rank() != 3 || kv.rank() != 4 || kv.shape()[1] != xv.shape()[0] || kv.shape()[2] != kv.shape()[3] ||
      bias.size() != kv.shape()[0]) {
    throw ShapeError("conv2d: input " + xv.describe() + ", kernels " + kv.describe() + ", bias " +
                     bias.value().describe() + " do not conform");
  }
  const std::size_t C = xv.shape()[0], H = xv.shape()[1], W = xv.shape()[2];
  const std::size_t O = kv.shape()[0], k = kv.shape()[2];
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  Tensor out({O, Ho, Wo});
  const auto kidx = [C, k](std::size_t o, std::size_t c, std::size_t dy, std::size_t dx) {
    return ((o * C + c) * k + dy) * k + dx;
  };
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Wo; ++x) {
        double s = bias.value()[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < k; ++dy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + dy) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t dx = 0; dx < k; ++dx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(x * stride + dx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              s += kv[kidx(o, c, dy, dx)] * xv.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        out.at(o, y, x) = s;
      }
  return X.tape->record(std::move(out), {X.id, K.id, bias.id}, [=](Tape& t, std::uint32_t self) {
    const auto in = t.inputs(self);
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(in[0]);
    const Tensor& kv = t.value(in[1]);
    const bool gx_on = t.requires_grad(in[0]), gk_on = t.requires_grad(in[1]), gb_on = t.requires_grad(in[2]);
    Tensor* gx = gx_on ? &t.grad(in[0]) : nullptr;
    Tensor* gk = gk_on ? &t.grad(in[1]) : nullptr;
    Tensor* gb = gb_on ? &t.grad(in[2]) : nullptr;
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
          const double go = g.at(o, y, x);
          if (go == 0.0) continue;
          if (gb) (*gb)[o] += go;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t dy = 0; dy < k; ++dy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(y * stride + dy) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t dx = 0; dx < k; ++dx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(x * stride + dx) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                if (gk) (*gk)[kidx(o, c, dy, dx)] += go * xv.at(c, uy, ux);
                if (gx) gx->at(c, uy, ux) += go * kv[kidx(o, c, dy, dx)];
              }
            }
        }
  });
}

/// Average over the spatial dimensions of a C x H x W map, giving a C-vector.
inline Var global_avg_pool(Var X) {
  const Tensor& xv = X.value();
  detail::require(xv.rank() == 3, "global_avg_pool: expected CxHxW, got " + xv.describe());
  const std::size_t C = xv.shape()[0], HW = xv.shape()[1] * xv.shape()[2];
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += xv[c * HW + i];
    out[c] = s / static_cast<double>(HW);
  }
  return X.tape->record(std::move(out), {X.id}, [C, HW](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(t.inputs(self)[0]);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) gx[c * HW + i] += g[c] / static_cast<double>(HW);
  });
}

/// Matrix-vector product M x for M (p x q), x (q) giving a p-vector.
inline Var matvec(Var M, Var x) {
  const Tensor& mv = M.value();
  detail::require(mv.rank() == 2 && mv.cols() == x.size(), detail::shapes("matvec", M, x));
  return reshape(matmul(M, reshape(x, {x.size(), 1})), {mv.rows()});
}

}  // namespace ops

/// Outcome of comparing reverse-mode gradients against central differences.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Central-difference gradient check. The closure receives one differentiable
 * leaf per input tensor and returns a scalar. Relative error per coordinate is
 * |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
 */
using ScalarClosure = std::function<Var(Tape&, const std::vector<Var>&)>;

inline GradCheckResult grad_check(const ScalarClosure& f, const std::vector<Tensor>& point, double h = 1e-5) {
  auto evaluate = [&](const std::vector<Tensor>& at) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : at) leaves.push_back(tape.leaf(x));
    const double v = f(tape, leaves).value().item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: closure value is not finite");
    return v;
  };

  GradCheckResult result;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : point) leaves.push_back(tape.leaf(x));
    Var out = f(tape, leaves);
    if (!std::isfinite(out.value().item())) throw NonFiniteError("grad_check: closure value is not finite");
    tape.backward(out);
    for (auto& l : leaves) result.analytic.push_back(tape.grad(l));
  }

  std::vector<Tensor> probe = point;
  for (std::size_t k = 0; k < point.size(); ++k) {
    Tensor num = Tensor::zeros_like(point[k]);
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      const double orig = point[k][i];
      probe[k][i] = orig + h;
      const double up = evaluate(probe);
      probe[k][i] = orig - h;
      const double down = evaluate(probe);
      probe[k][i] = orig;
      num[i] = (up - down) / (2.0 * h);
      const double ad = result.analytic[k][i];
      const double denom = std::max({1.0, std::abs(ad), std::abs(num[i])});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(ad - num[i]) / denom);
    }
    result.numeric.push_back(std::move(num));
  }
  return result;
}

/// Same check over every tensor of a parameter set; f builds the loss from the current parameter values.
inline GradCheckResult grad_check_params(ParamSet& params, const std::function<Var(Tape&)>& f, double h = 1e-5) {
  auto evaluate = [&] {
    Tape tape;
    const double v = f(tape).value().item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: loss is not finite");
    return v;
  };
  GradCheckResult result;
  params.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  for (auto& [name, p] : params) {
    result.analytic.push_back(p.grad);
    Tensor num = Tensor::zeros_like(p.value);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = evaluate();
      p.value[i] = orig - h;
      const double down = evaluate();
      p.value[i] = orig;
      num[i] = (up - down) / (2.0 * h);
      const double ad = p.grad[i];
      const double denom = std::max({1.0, std::abs(ad), std::abs(num[i])});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(ad - num[i]) / denom);
    }
    result.numeric.push_back(std::move(num));
  }
  return result;
}

}  // namespace vgidm
