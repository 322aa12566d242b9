#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pheno/common.hpp"

namespace pheno::ad {

// Reverse-mode tape over blocks of doubles. Forward values are computed
// eagerly at node construction into one flat buffer; backward() runs a single
// reverse sweep and leaves gradients readable per node. Blocks keep the node
// count per season small, so rebuilding the tape every epoch is cheap.
enum class OpKind {
  Leaf,
  Const,
  Add,        // a + b, same size
  AddScalar,  // a + broadcast(size-1 b)
  AddConst,   // a + c0
  Mul,        // a * b, same size
  MulScalar,  // a * broadcast(size-1 b)
  MulConst,   // a * c0
  Neg,
  MaxConst,   // max(a, c0)
  Exp,
  Log,
  Recip,
  Logistic,
  Relu,
  Linear,     // (rows x k) a times transpose of (m x k) b -> rows x m
  AddRowVec,  // (rows x m) a + per-column b
  CumSum,
  Sum,        // scalar
  Index,      // scalar pick a[c0]
  GdhHinge,   // rows x cols a, scalar b: out[r] = sum_h max(0, a[r,h] - b)
};

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Const: return "const";
    case OpKind::Add: return "add";
    case OpKind::AddScalar: return "add-scalar";
    case OpKind::AddConst: return "add-const";
    case OpKind::Mul: return "mul";
    case OpKind::MulScalar: return "mul-scalar";
    case OpKind::MulConst: return "mul-const";
    case OpKind::Neg: return "neg";
    case OpKind::MaxConst: return "max-const";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Recip: return "recip";
    case OpKind::Logistic: return "logistic";
    case OpKind::Relu: return "relu";
    case OpKind::Linear: return "linear";
    case OpKind::AddRowVec: return "add-row-vec";
    case OpKind::CumSum: return "cumsum";
    case OpKind::Sum: return "sum";
    case OpKind::Index: return "index";
    case OpKind::GdhHinge: return "gdh-hinge";
  }
  return "?";
}

// Numerically stable logistic; safe for |x| far beyond 700.
inline double stable_logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}
inline void axpy(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
}  // namespace detail

class Tape {
 public:
  using Id = int;

  struct Node {
    OpKind kind;
    Id a = -1;
    Id b = -1;
    std::size_t off = 0;
    std::size_t size = 0;
    double c0 = 0.0;
    int rows = 0;  // Linear/AddRowVec/GdhHinge geometry
    int cols = 0;
  };

  void clear() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
  }

  Id leaf(std::span<const double> v) { return push_data(OpKind::Leaf, v); }
  Id leaf(std::initializer_list<double> v) {
    return push_data(OpKind::Leaf, {v.begin(), v.size()});
  }
  Id constant(std::span<const double> v) { return push_data(OpKind::Const, v); }
  Id constant(std::initializer_list<double> v) {
    return push_data(OpKind::Const, {v.begin(), v.size()});
  }
  Id constant_scalar(double v) { return constant(std::span<const double>(&v, 1)); }

  Id add(Id a, Id b) {
    require_same_size(a, b, "add");
    Node& n = push(OpKind::Add, node(a).size, a, b);
    const double* pa = val_ptr(a);
    const double* pb = val_ptr(b);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] + pb[i];
    return id_of(n);
  }

  Id add_scalar(Id a, Id s) {
    require_scalar(s, "add-scalar");
    Node& n = push(OpKind::AddScalar, node(a).size, a, s);
    const double* pa = val_ptr(a);
    const double sv = vals_[node(s).off];
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] + sv;
    return id_of(n);
  }

  Id add_const(Id a, double c) {
    Node& n = push(OpKind::AddConst, node(a).size, a, -1, c);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] + c;
    return id_of(n);
  }

  Id mul(Id a, Id b) {
    require_same_size(a, b, "mul");
    Node& n = push(OpKind::Mul, node(a).size, a, b);
    const double* pa = val_ptr(a);
    const double* pb = val_ptr(b);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] * pb[i];
    return id_of(n);
  }

  Id mul_scalar(Id a, Id s) {
    require_scalar(s, "mul-scalar");
    Node& n = push(OpKind::MulScalar, node(a).size, a, s);
    const double* pa = val_ptr(a);
    const double sv = vals_[node(s).off];
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] * sv;
    return id_of(n);
  }

  Id mul_const(Id a, double c) {
    Node& n = push(OpKind::MulConst, node(a).size, a, -1, c);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] * c;
    return id_of(n);
  }

  Id neg(Id a) {
    Node& n = push(OpKind::Neg, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = -pa[i];
    return id_of(n);
  }

  Id max_const(Id a, double c) {
    Node& n = push(OpKind::MaxConst, node(a).size, a, -1, c);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] > c ? pa[i] : c;
    return id_of(n);
  }

  Id exp_op(Id a) {
    Node& n = push(OpKind::Exp, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) {
      out[i] = std::exp(pa[i]);
      if (!std::isfinite(out[i])) fail_nonfinite(OpKind::Exp, pa[i]);
    }
    return id_of(n);
  }

  Id log_op(Id a) {
    Node& n = push(OpKind::Log, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) {
      if (!(pa[i] > 0.0)) fail_nonfinite(OpKind::Log, pa[i]);
      out[i] = std::log(pa[i]);
    }
    return id_of(n);
  }

  Id recip(Id a) {
    Node& n = push(OpKind::Recip, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) {
      out[i] = 1.0 / pa[i];
      if (!std::isfinite(out[i])) fail_nonfinite(OpKind::Recip, pa[i]);
    }
    return id_of(n);
  }

  Id logistic(Id a) {
    Node& n = push(OpKind::Logistic, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = stable_logistic(pa[i]);
    return id_of(n);
  }

  Id relu(Id a) {
    Node& n = push(OpKind::Relu, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    for (std::size_t i = 0; i < n.size; ++i) out[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    return id_of(n);
  }

  // a is (rows x inner) row-major, w is (m x inner) row-major; output
  // (rows x m) with out[r][j] = <row r of a, row j of w>. Batched
  // matrix-vector product over all rows at once.
  Id linear(Id a, Id w, int rows, int inner) {
    if (node(a).size != static_cast<std::size_t>(rows) * inner) {
      throw Error("linear: input size mismatch");
    }
    if (node(w).size % inner != 0) throw Error("linear: weight size mismatch");
    const int m = static_cast<int>(node(w).size) / inner;
    Node& n = push(OpKind::Linear, static_cast<std::size_t>(rows) * m, a, w);
    n.rows = rows;
    n.cols = inner;
    const double* pa = val_ptr(a);
    const double* pw = val_ptr(w);
    double* out = val_ptr(n);
    for (int r = 0; r < rows; ++r) {
      const double* ar = pa + static_cast<std::size_t>(r) * inner;
      double* orow = out + static_cast<std::size_t>(r) * m;
      for (int j = 0; j < m; ++j) {
        orow[j] = detail::dot(ar, pw + static_cast<std::size_t>(j) * inner,
                              static_cast<std::size_t>(inner));
      }
    }
    return id_of(n);
  }

  Id add_row_vec(Id a, Id b, int rows) {
    const std::size_t m = node(b).size;
    if (node(a).size != static_cast<std::size_t>(rows) * m) {
      throw Error("add-row-vec: size mismatch");
    }
    Node& n = push(OpKind::AddRowVec, node(a).size, a, b);
    n.rows = rows;
    n.cols = static_cast<int>(m);
    const double* pa = val_ptr(a);
    const double* pb = val_ptr(b);
    double* out = val_ptr(n);
    for (int r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < m; ++j) {
        out[r * m + j] = pa[r * m + j] + pb[j];
      }
    }
    return id_of(n);
  }

  Id cumsum(Id a) {
    Node& n = push(OpKind::CumSum, node(a).size, a);
    const double* pa = val_ptr(a);
    double* out = val_ptr(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n.size; ++i) {
      acc += pa[i];
      out[i] = acc;
    }
    return id_of(n);
  }

  Id sum(Id a) {
    Node& n = push(OpKind::Sum, 1, a);
    const double* pa = val_ptr(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < node(n.a).size; ++i) acc += pa[i];
    vals_[n.off] = acc;
    return id_of(n);
  }

  Id index(Id a, int i) {
    if (i < 0 || static_cast<std::size_t>(i) >= node(a).size) {
      throw Error("index: out of range");
    }
    Node& n = push(OpKind::Index, 1, a, -1, static_cast<double>(i));
    vals_[n.off] = vals_[node(a).off + i];
    return id_of(n);
  }

  // Fused daily Growing Degree Hours: for each row of a (rows x cols hourly
  // temps) the sum of max(0, temp - base), with base a size-1 node.
  Id gdh_hinge(Id a, Id base, int rows, int cols) {
    if (node(a).size != static_cast<std::size_t>(rows) * cols) {
      throw Error("gdh-hinge: size mismatch");
    }
    require_scalar(base, "gdh-hinge");
    Node& n = push(OpKind::GdhHinge, static_cast<std::size_t>(rows), a, base);
    n.rows = rows;
    n.cols = cols;
    const double* pa = val_ptr(a);
    const double tb = vals_[node(base).off];
    double* out = val_ptr(n);
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* row = pa + static_cast<std::size_t>(r) * cols;
      for (int h = 0; h < cols; ++h) {
        const double d = row[h] - tb;
        if (d > 0.0) acc += d;
      }
      out[r] = acc;
    }
    return id_of(n);
  }

  std::span<const double> value(Id id) const {
    const Node& n = node(id);
    return {vals_.data() + n.off, n.size};
  }
  double scalar(Id id) const {
    require_scalar(id, "scalar");
    return vals_[node(id).off];
  }
  std::size_t size(Id id) const { return node(id).size; }
  std::size_t node_count() const { return nodes_.size(); }

  // Single reverse sweep from a scalar output. Forward values are left
  // untouched, so repeated calls return identical gradients.
  void backward(Id output) {
    require_scalar(output, "backward");
    grads_.assign(vals_.size(), 0.0);
    grads_[node(output).off] = 1.0;
    for (int id = output; id >= 0; --id) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      const double* g = grads_.data() + n.off;
      switch (n.kind) {
        case OpKind::Leaf:
        case OpKind::Const:
          break;
        case OpKind::Add: {
          accum(n.a, [&](double* ga) { detail::axpy(ga, 1.0, g, n.size); });
          accum(n.b, [&](double* gb) { detail::axpy(gb, 1.0, g, n.size); });
          break;
        }
        case OpKind::AddScalar: {
          accum(n.a, [&](double* ga) { detail::axpy(ga, 1.0, g, n.size); });
          accum(n.b, [&](double* gb) {
            double s = 0.0;
            for (std::size_t i = 0; i < n.size; ++i) s += g[i];
            gb[0] += s;
          });
          break;
        }
        case OpKind::AddConst:
        case OpKind::CumSum:
        case OpKind::Sum:
        case OpKind::Index:
        case OpKind::Neg:
        case OpKind::MulConst: {
          accum(n.a, [&](double* ga) {
            switch (n.kind) {
              case OpKind::AddConst:
                detail::axpy(ga, 1.0, g, n.size);
                break;
              case OpKind::Neg:
                detail::axpy(ga, -1.0, g, n.size);
                break;
              case OpKind::MulConst:
                detail::axpy(ga, n.c0, g, n.size);
                break;
              case OpKind::CumSum: {
                double acc = 0.0;
                for (std::size_t i = n.size; i-- > 0;) {
                  acc += g[i];
                  ga[i] += acc;
                }
                break;
              }
              case OpKind::Sum: {
                const double gv = g[0];
                for (std::size_t i = 0; i < node(n.a).size; ++i) ga[i] += gv;
                break;
              }
              case OpKind::Index:
                ga[static_cast<std::size_t>(n.c0)] += g[0];
                break;
              default: break;
            }
          });
          break;
        }
        case OpKind::Mul: {
          const double* va = val_ptr(n.a);
          const double* vb = val_ptr(n.b);
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) ga[i] += g[i] * vb[i];
          });
          accum(n.b, [&](double* gb) {
            for (std::size_t i = 0; i < n.size; ++i) gb[i] += g[i] * va[i];
          });
          break;
        }
        case OpKind::MulScalar: {
          const double* va = val_ptr(n.a);
          const double sv = vals_[node(n.b).off];
          accum(n.a, [&](double* ga) { detail::axpy(ga, sv, g, n.size); });
          accum(n.b, [&](double* gb) {
            gb[0] += detail::dot(g, va, n.size);
          });
          break;
        }
        case OpKind::MaxConst: {
          const double* va = val_ptr(n.a);
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) {
              if (va[i] > n.c0) ga[i] += g[i];
            }
          });
          break;
        }
        case OpKind::Exp: {
          const double* out = vals_.data() + n.off;
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) ga[i] += g[i] * out[i];
          });
          break;
        }
        case OpKind::Log: {
          const double* va = val_ptr(n.a);
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) ga[i] += g[i] / va[i];
          });
          break;
        }
        case OpKind::Recip: {
          const double* out = vals_.data() + n.off;
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) {
              ga[i] -= g[i] * out[i] * out[i];
            }
          });
          break;
        }
        case OpKind::Logistic: {
          const double* out = vals_.data() + n.off;
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) {
              ga[i] += g[i] * out[i] * (1.0 - out[i]);
            }
          });
          break;
        }
        case OpKind::Relu: {
          const double* va = val_ptr(n.a);
          accum(n.a, [&](double* ga) {
            for (std::size_t i = 0; i < n.size; ++i) {
              if (va[i] > 0.0) ga[i] += g[i];
            }
          });
          break;
        }
        case OpKind::Linear: {
          const int rows = n.rows;
          const int inner = n.cols;
          const int m = static_cast<int>(node(n.b).size) / inner;
          const double* va = val_ptr(n.a);
          const double* vw = val_ptr(n.b);
          accum(n.a, [&](double* ga) {
            for (int r = 0; r < rows; ++r) {
              const double* gr = g + static_cast<std::size_t>(r) * m;
              double* gar = ga + static_cast<std::size_t>(r) * inner;
              for (int j = 0; j < m; ++j) {
                if (gr[j] != 0.0) {
                  detail::axpy(gar, gr[j],
                               vw + static_cast<std::size_t>(j) * inner,
                               static_cast<std::size_t>(inner));
                }
              }
            }
          });
          accum(n.b, [&](double* gw) {
            for (int r = 0; r < rows; ++r) {
              const double* gr = g + static_cast<std::size_t>(r) * m;
              const double* ar = va + static_cast<std::size_t>(r) * inner;
              for (int j = 0; j < m; ++j) {
                if (gr[j] != 0.0) {
                  detail::axpy(gw + static_cast<std::size_t>(j) * inner, gr[j],
                               ar, static_cast<std::size_t>(inner));
                }
              }
            }
          });
          break;
        }
        case OpKind::AddRowVec: {
          const int rows = n.rows;
          const std::size_t m = static_cast<std::size_t>(n.cols);
          accum(n.a, [&](double* ga) { detail::axpy(ga, 1.0, g, n.size); });
          accum(n.b, [&](double* gb) {
            for (int r = 0; r < rows; ++r) {
              detail::axpy(gb, 1.0, g + static_cast<std::size_t>(r) * m, m);
            }
          });
          break;
        }
        case OpKind::GdhHinge: {
          const double* va = val_ptr(n.a);
          const double tb = vals_[node(n.b).off];
          const int cols = n.cols;
          accum(n.b, [&](double* gb) {
            double acc = 0.0;
            for (int r = 0; r < n.rows; ++r) {
              if (g[r] == 0.0) continue;
              int cnt = 0;
              const double* row = va + static_cast<std::size_t>(r) * cols;
              for (int h = 0; h < cols; ++h) {
                if (row[h] > tb) ++cnt;
              }
              acc -= g[r] * cnt;
            }
            gb[0] += acc;
          });
          accum(n.a, [&](double* ga) {
            for (int r = 0; r < n.rows; ++r) {
              if (g[r] == 0.0) continue;
              const double* row = va + static_cast<std::size_t>(r) * cols;
              double* grow = ga + static_cast<std::size_t>(r) * cols;
              for (int h = 0; h < cols; ++h) {
                if (row[h] > tb) grow[h] += g[r];
              }
            }
          });
          break;
        }
      }
    }
  }

  std::span<const double> grad(Id id) const {
    if (grads_.size() != vals_.size()) throw Error("grad before backward");
    const Node& n = node(id);
    return {grads_.data() + n.off, n.size};
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;

  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  Id id_of(const Node& n) const { return static_cast<Id>(&n - nodes_.data()); }
  const double* val_ptr(Id id) const { return vals_.data() + node(id).off; }
  double* val_ptr(Node& n) { return vals_.data() + n.off; }

  Node& push(OpKind kind, std::size_t size, Id a = -1, Id b = -1, double c0 = 0.0) {
    Node n;
    n.kind = kind;
    n.a = a;
    n.b = b;
    n.c0 = c0;
    n.off = vals_.size();
    n.size = size;
    vals_.resize(vals_.size() + size, 0.0);
    nodes_.push_back(n);
    return nodes_.back();
  }

  Id push_data(OpKind kind, std::span<const double> v) {
    Node& n = push(kind, v.size());
    std::copy(v.begin(), v.end(), vals_.begin() + static_cast<std::ptrdiff_t>(n.off));
    return id_of(n);
  }

  // Gradients never flow into constants; skipping them avoids the layer-1
  // input GEMM entirely.
  template <typename Fn>
  void accum(Id input, Fn&& fn) {
    if (input < 0) return;
    if (node(input).kind == OpKind::Const) return;
    fn(grads_.data() + node(input).off);
  }

  void require_same_size(Id a, Id b, const char* op) const {
    if (node(a).size != node(b).size) {
      throw Error(std::string(op) + ": operand sizes differ");
    }
  }
  void require_scalar(Id id, const char* op) const {
    if (node(id).size != 1) {
      throw Error(std::string(op) + ": expected size-1 operand");
    }
  }
  [[noreturn]] static void fail_nonfinite(OpKind kind, double input) {
    throw Error(std::string("non-finite value in ") + to_string(kind) +
                " node (forward input " + std::to_string(input) + ")");
  }
};

// ---------------------------------------------------------------------------
// Adam with classic coupled L2 weight decay (lambda * param added to the raw
// gradient before the moment updates). decay_mask, when non-empty, limits the
// decay term to the flagged coordinates.
struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::vector<double>& params, std::span<const double> grads,
                      AdamState& state, const AdamHyper& hyper,
                      std::span<const unsigned char> decay_mask = {}) {
  const std::size_t n = params.size();
  if (grads.size() != n) throw Error("adam_step: gradient size mismatch");
  if (state.m.size() != n || state.v.size() != n) {
    throw Error("adam_step: moment state size mismatch");
  }
  if (!decay_mask.empty() && decay_mask.size() != n) {
    throw Error("adam_step: decay mask size mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error("adam_step: non-finite gradient at coordinate " +
                  std::to_string(i) + " on iteration " +
                  std::to_string(state.step));
    }
    double g = grads[i];
    if (hyper.weight_decay != 0.0 && (decay_mask.empty() || decay_mask[i])) {
      g += hyper.weight_decay * params[i];
    }
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

}  // namespace pheno::ad
