#include "rscl/autodiff.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "rscl/errors.hpp"

namespace rscl {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  if (!has_grad) {
    grad = Tensor::zeros(value.shape());
    has_grad = true;
  }
  require_same_shape(grad, g, "gradient accumulate");
  double* dst = grad.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

Var Var::leaf(Tensor value, bool requires_grad) {
  require_finite(value, "leaf");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  // NoGradGuard suspends taping of ops, not leaf markings; a parameter
  // created inside a guard still participates in later taped graphs.
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

const Tensor& Var::value() const {
  if (!node_) throw ValueError("Var: use of default-constructed variable");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

const Tensor& Var::grad() const {
  if (!node_) throw ValueError("Var: use of default-constructed variable");
  if (!node_->requires_grad) {
    throw ValueError("Var::grad: variable does not require gradients");
  }
  if (!node_->has_grad) {
    node_->grad = Tensor::zeros(node_->value.shape());
    node_->has_grad = true;
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (!node_) return;
  node_->grad = Tensor();
  node_->has_grad = false;
  node_->consumed = false;
}

void Var::set_value(Tensor v) {
  if (!node_) throw ValueError("Var::set_value: undefined variable");
  if (!node_->parents.empty() || node_->backprop) {
    throw ValueError("Var::set_value: only leaf variables may be assigned");
  }
  require_same_shape(node_->value, v, "Var::set_value");
  require_finite(v, "Var::set_value");
  node_->value = std::move(v);
}

double Var::item() const {
  const Tensor& t = value();
  if (!t.is_scalar()) {
    throw ShapeError("Var::item: expected scalar, got shape " + shape_str(t.shape()));
  }
  return t[0];
}

Var make_op(const char* name, Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> backprop) {
  require_finite(value, name);
  auto n = std::make_shared<Node>();
  n->op = name;
  n->value = std::move(value);
  bool any_grad = false;
  for (const auto& v : inputs) {
    if (!v.defined()) throw ValueError(std::string(name) + ": undefined operand");
    any_grad = any_grad || v.requires_grad();
  }
  if (g_grad_enabled && any_grad) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& v : inputs) n->parents.push_back(v.node());
    n->backprop = std::move(backprop);
  }
  return Var(std::move(n));
}

void zero_grads(const std::vector<Var>& vars) {
  for (auto v : vars) v.zero_grad();
}

void backward(const Var& root) {
  if (!root.defined()) throw ValueError("backward: undefined root");
  Node* r = root.node().get();
  if (r->value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " +
                     shape_str(r->value.shape()));
  }
  if (r->consumed) {
    throw ValueError("backward: graph already consumed; rebuild it before "
                     "calling backward again");
  }
  if (!r->requires_grad) {
    throw ValueError(
        "backward: root does not require grad (was the graph built under "
        "no-grad, or from constants only?)");
  }
  r->consumed = true;

  // Post-order DFS over the grad-relevant subgraph; reversed, it visits every
  // node before its parents, so all child contributions land first.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  std::unordered_set<Node*> seen;
  stack.push_back({r, 0});
  seen.insert(r);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      Node* p = top.first->parents[top.second++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  r->accumulate(Tensor::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->has_grad) n->backprop(*n);
  }
}

// ---- op implementations ---------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(A.shape()) +
                     " vs " + shape_str(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::zeros({m, n});
  {
    const double* pa = A.data();
    const double* pb = B.data();
    double* pc = C.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      double* crow = pc + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = pb + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return make_op("matmul", std::move(C), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const Tensor& A = pa->value;
    const Tensor& B = pb->value;
    const Tensor& G = self.grad;
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (pa->requires_grad) {
      Tensor dA = Tensor::zeros(A.shape());  // G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = G.data() + i * n;
          const double* brow = B.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA.at(i, p) = acc;
        }
      }
      pa->accumulate(dA);
    }
    if (pb->requires_grad) {
      Tensor dB = Tensor::zeros(B.shape());  // A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A.data() + i * k;
        const double* grow = G.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = arow[p];
          double* brow = dB.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
      }
      pb->accumulate(dB);
    }
  });
}

Var transpose(const Var& a) {
  const Tensor& A = a.value();
  require_rank2(A, "transpose");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor T = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T.at(j, i) = A.at(i, j);
  return make_op("transpose", std::move(T), {a}, [](Node& self) {
    const Tensor& G = self.grad;
    Node* p = self.parents[0].get();
    Tensor dA = Tensor::zeros(p->value.shape());
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) dA.at(j, i) = G.at(i, j);
    p->accumulate(dA);
  });
}

Var add(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "add");
  Tensor C = A;
  double* pc = C.data();
  const double* pb = B.data();
  for (std::size_t i = 0; i < C.size(); ++i) pc[i] += pb[i];
  return make_op("add", std::move(C), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Var add_rowvec(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "add_rowvec");
  require_rank2(B, "add_rowvec");
  if (B.rows() != 1 || B.cols() != A.cols()) {
    throw ShapeError("add_rowvec: expected [1," + std::to_string(A.cols()) +
                     "] row vector for " + shape_str(A.shape()) + ", got " +
                     shape_str(B.shape()));
  }
  Tensor C = A;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C.at(i, j) += B.at(0, j);
  return make_op("add_rowvec", std::move(C), {a, b}, [](Node& self) {
    const Tensor& G = self.grad;
    self.parents[0]->accumulate(G);
    Node* pb = self.parents[1].get();
    if (pb->requires_grad) {
      Tensor db = Tensor::zeros(pb->value.shape());
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < G.cols(); ++j) db.at(0, j) += G.at(i, j);
      pb->accumulate(db);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "sub");
  Tensor C = A;
  double* pc = C.data();
  const double* pb = B.data();
  for (std::size_t i = 0; i < C.size(); ++i) pc[i] -= pb[i];
  return make_op("sub", std::move(C), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    Node* pb = self.parents[1].get();
    if (pb->requires_grad) {
      Tensor ng = self.grad;
      double* p = ng.data();
      for (std::size_t i = 0; i < ng.size(); ++i) p[i] = -p[i];
      pb->accumulate(ng);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "mul");
  Tensor C = A;
  double* pc = C.data();
  const double* pb = B.data();
  for (std::size_t i = 0; i < C.size(); ++i) pc[i] *= pb[i];
  return make_op("mul", std::move(C), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const Tensor& G = self.grad;
    if (pa->requires_grad) {
      Tensor dA = G;
      double* p = dA.data();
      const double* q = pb->value.data();
      for (std::size_t i = 0; i < dA.size(); ++i) p[i] *= q[i];
      pa->accumulate(dA);
    }
    if (pb->requires_grad) {
      Tensor dB = G;
      double* p = dB.data();
      const double* q = pa->value.data();
      for (std::size_t i = 0; i < dB.size(); ++i) p[i] *= q[i];
      pb->accumulate(dB);
    }
  });
}

Var scale(const Var& a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite scalar factor");
  Tensor C = a.value();
  double* pc = C.data();
  for (std::size_t i = 0; i < C.size(); ++i) pc[i] *= c;
  return make_op("scale", std::move(C), {a}, [c](Node& self) {
    Tensor dA = self.grad;
    double* p = dA.data();
    for (std::size_t i = 0; i < dA.size(); ++i) p[i] *= c;
    self.parents[0]->accumulate(dA);
  });
}

Var tanh(const Var& a) {
  Tensor Y = a.value();
  double* py = Y.data();
  for (std::size_t i = 0; i < Y.size(); ++i) py[i] = std::tanh(py[i]);
  return make_op("tanh", std::move(Y), {a}, [](Node& self) {
    Tensor dA = self.grad;
    double* p = dA.data();
    const double* y = self.value.data();
    for (std::size_t i = 0; i < dA.size(); ++i) p[i] *= 1.0 - y[i] * y[i];
    self.parents[0]->accumulate(dA);
  });
}

Var relu(const Var& a) {
  Tensor Y = a.value();
  double* py = Y.data();
  for (std::size_t i = 0; i < Y.size(); ++i) py[i] = py[i] > 0.0 ? py[i] : 0.0;
  return make_op("relu", std::move(Y), {a}, [](Node& self) {
    Tensor dA = self.grad;
    double* p = dA.data();
    const double* x = self.parents[0]->value.data();
    for (std::size_t i = 0; i < dA.size(); ++i) {
      if (x[i] <= 0.0) p[i] = 0.0;
    }
    self.parents[0]->accumulate(dA);
  });
}

namespace {
// Shared max-shifted softmax kernel; writes exp(x - m) / sum per row.
void softmax_rows_into(const Tensor& X, Tensor& Y) {
  const std::size_t m = X.rows(), n = X.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = X.data() + i * n;
    double* yr = Y.data() + i * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
}
}  // namespace

Var row_softmax(const Var& a) {
  const Tensor& X = a.value();
  require_rank2(X, "row_softmax");
  Tensor Y = Tensor::zeros(X.shape());
  softmax_rows_into(X, Y);
  return make_op("row_softmax", std::move(Y), {a}, [](Node& self) {
    const Tensor& Y = self.value;
    const Tensor& G = self.grad;
    const std::size_t m = Y.rows(), n = Y.cols();
    Tensor dX = Tensor::zeros(Y.shape());
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = Y.data() + i * n;
      const double* g = G.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      double* d = dX.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) d[j] = y[j] * (g[j] - dot);
    }
    self.parents[0]->accumulate(dX);
  });
}

Var row_log_softmax(const Var& a) {
  const Tensor& X = a.value();
  require_rank2(X, "row_log_softmax");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor Y = Tensor::zeros(X.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = X.data() + i * n;
    double* yr = Y.data() + i * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) yr[j] = xr[j] - lse;
  }
  return make_op("row_log_softmax", std::move(Y), {a}, [](Node& self) {
    // d/dx log_softmax: g - softmax(x) * rowsum(g)
    const Tensor& Y = self.value;
    const Tensor& G = self.grad;
    const std::size_t m = Y.rows(), n = Y.cols();
    Tensor dX = Tensor::zeros(Y.shape());
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = Y.data() + i * n;
      const double* g = G.data() + i * n;
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[j];
      double* d = dX.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) d[j] = g[j] - std::exp(y[j]) * gs;
    }
    self.parents[0]->accumulate(dX);
  });
}

Var l2_normalize_rows(const Var& a) {
  const Tensor& X = a.value();
  require_rank2(X, "l2_normalize_rows");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor Y = X;
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = X.data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xr[j] * xr[j];
    const double nrm = std::sqrt(s);
    if (nrm == 0.0) {
      throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
    }
    norms[i] = nrm;
    double* yr = Y.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) yr[j] /= nrm;
  }
  return make_op("l2_normalize_rows", std::move(Y), {a}, [norms](Node& self) {
    // y = x/|x|; dx = g/|x| - y * (g.y)/|x|
    const Tensor& Y = self.value;
    const Tensor& G = self.grad;
    const std::size_t m = Y.rows(), n = Y.cols();
    Tensor dX = Tensor::zeros(Y.shape());
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = Y.data() + i * n;
      const double* g = G.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      double* d = dX.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) d[j] = (g[j] - y[j] * dot) / norms[i];
    }
    self.parents[0]->accumulate(dX);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_rows: no operands");
  const std::size_t n = parts[0].value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.value().cols() != n) {
      throw ShapeError("concat_rows: column mismatch " +
                       shape_str(parts[0].value().shape()) + " vs " +
                       shape_str(p.value().shape()));
    }
    total += p.value().rows();
  }
  Tensor C = Tensor::zeros({total, n});
  std::size_t r = 0;
  for (const auto& p : parts) {
    const Tensor& A = p.value();
    std::copy(A.data(), A.data() + A.size(), C.data() + r * n);
    r += A.rows();
  }
  return make_op("concat_rows", std::move(C), parts, [](Node& self) {
    const Tensor& G = self.grad;
    const std::size_t n = G.cols();
    std::size_t r = 0;
    for (auto& parent : self.parents) {
      const std::size_t pr = parent->value.rows();
      if (parent->requires_grad) {
        Tensor dP = Tensor::zeros(parent->value.shape());
        std::copy(G.data() + r * n, G.data() + (r + pr) * n, dP.data());
        parent->accumulate(dP);
      }
      r += pr;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: no operands");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != m) {
      throw ShapeError("concat_cols: row mismatch " +
                       shape_str(parts[0].value().shape()) + " vs " +
                       shape_str(p.value().shape()));
    }
    total += p.value().cols();
  }
  Tensor C = Tensor::zeros({m, total});
  std::size_t c = 0;
  for (const auto& p : parts) {
    const Tensor& A = p.value();
    for (std::size_t i = 0; i < m; ++i)
      std::copy(A.data() + i * A.cols(), A.data() + (i + 1) * A.cols(),
                C.data() + i * total + c);
    c += A.cols();
  }
  return make_op("concat_cols", std::move(C), parts, [](Node& self) {
    const Tensor& G = self.grad;
    const std::size_t m = G.rows(), total = G.cols();
    std::size_t c = 0;
    for (auto& parent : self.parents) {
      const std::size_t pc = parent->value.cols();
      if (parent->requires_grad) {
        Tensor dP = Tensor::zeros(parent->value.shape());
        for (std::size_t i = 0; i < m; ++i)
          std::copy(G.data() + i * total + c, G.data() + i * total + c + pc,
                    dP.data() + i * pc);
        parent->accumulate(dP);
      }
      c += pc;
    }
  });
}

Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
  const Tensor& A = a.value();
  require_rank2(A, "slice_rows");
  if (r0 >= r1 || r1 > A.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") invalid for " + shape_str(A.shape()));
  }
  const std::size_t n = A.cols();
  Tensor S = Tensor::zeros({r1 - r0, n});
  std::copy(A.data() + r0 * n, A.data() + r1 * n, S.data());
  return make_op("slice_rows", std::move(S), {a}, [r0](Node& self) {
    Node* p = self.parents[0].get();
    const Tensor& G = self.grad;
    Tensor dA = Tensor::zeros(p->value.shape());
    std::copy(G.data(), G.data() + G.size(), dA.data() + r0 * G.cols());
    p->accumulate(dA);
  });
}

Var reshape(const Var& a, const Shape& shape) {
  const Tensor& A = a.value();
  Tensor R(shape, std::vector<double>(A.data(), A.data() + A.size()));
  return make_op("reshape", std::move(R), {a}, [](Node& self) {
    Node* p = self.parents[0].get();
    Tensor dA(p->value.shape(),
              std::vector<double>(self.grad.data(), self.grad.data() + self.grad.size()));
    p->accumulate(dA);
  });
}

Var gather_rows(const Var& table, const std::vector<std::size_t>& idx) {
  const Tensor& T = table.value();
  require_rank2(T, "gather_rows");
  if (idx.empty()) throw ValueError("gather_rows: empty index list");
  for (auto i : idx) {
    if (i >= T.rows()) {
      throw ValueError("gather_rows: index " + std::to_string(i) +
                       " out of range for " + shape_str(T.shape()));
    }
  }
  const std::size_t n = T.cols();
  Tensor G = Tensor::zeros({idx.size(), n});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(T.data() + idx[r] * n, T.data() + (idx[r] + 1) * n, G.data() + r * n);
  return make_op("gather_rows", std::move(G), {table}, [idx](Node& self) {
    Node* p = self.parents[0].get();
    const Tensor& G = self.grad;
    const std::size_t n = G.cols();
    Tensor dT = Tensor::zeros(p->value.shape());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = dT.data() + idx[r] * n;
      const double* src = G.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
    p->accumulate(dT);
  });
}

Var sum(const Var& a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  return make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    Node* p = self.parents[0].get();
    p->accumulate(Tensor::full(p->value.shape(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  return make_op("mean", Tensor::scalar(s / static_cast<double>(A.size())), {a},
                 [](Node& self) {
                   Node* p = self.parents[0].get();
                   const double g = self.grad[0] / static_cast<double>(p->value.size());
                   p->accumulate(Tensor::full(p->value.shape(), g));
                 });
}

Var mean_rows(const Var& a) {
  const Tensor& A = a.value();
  require_rank2(A, "mean_rows");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor M = Tensor::zeros({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) M[j] += A.at(i, j);
  for (std::size_t j = 0; j < n; ++j) M[j] /= static_cast<double>(m);
  return make_op("mean_rows", std::move(M), {a}, [](Node& self) {
    Node* p = self.parents[0].get();
    const Tensor& G = self.grad;
    const std::size_t m = p->value.rows(), n = p->value.cols();
    Tensor dA = Tensor::zeros(p->value.shape());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        dA.at(i, j) = G[j] / static_cast<double>(m);
    p->accumulate(dA);
  });
}

Var mse(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double d = A[i] - B[i];
    s += d * d;
  }
  const double n = static_cast<double>(A.size());
  return make_op("mse", Tensor::scalar(s / n), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const Tensor& A = pa->value;
    const Tensor& B = pb->value;
    const double g = self.grad[0] * 2.0 / static_cast<double>(A.size());
    if (pa->requires_grad) {
      Tensor dA = Tensor::zeros(A.shape());
      for (std::size_t i = 0; i < A.size(); ++i) dA[i] = g * (A[i] - B[i]);
      pa->accumulate(dA);
    }
    if (pb->requires_grad) {
      Tensor dB = Tensor::zeros(B.shape());
      for (std::size_t i = 0; i < B.size(); ++i) dB[i] = g * (B[i] - A[i]);
      pb->accumulate(dB);
    }
  });
}

Var detach(const Var& a) { return Var::constant(a.value()); }

}  // namespace rscl
