#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rscl/tensor.hpp"

namespace rscl {

// Define-by-run reverse-mode autodiff over Tensor. Every op validates operand
// shapes and checks its output for NaN/Inf, so a non-finite value surfaces at
// the op that produced it instead of at the loss.
//
// Gradient taping can be suspended with NoGradGuard (rollouts, finite-diff
// probes); ops then return constants and build no graph.

struct Node;

class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad);
  static Var constant(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  bool requires_grad() const;

  // Accumulated gradient; throws ValueError if this Var does not require one.
  const Tensor& grad() const;
  void zero_grad();

  // In-place value update for optimizer steps; leaves only.
  void set_value(Tensor v);
  double item() const;  // scalar value

  std::shared_ptr<Node> node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
  friend Var make_op(const char*, Tensor, std::vector<Var>,
                     std::function<void(Node&)>);
};

struct Node {
  const char* op = "leaf";
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  bool consumed = false;  // a backward pass already ran from this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pushes this->grad into parents

  void accumulate(const Tensor& g);
};

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Runs reverse-mode accumulation from a scalar root. A second call on the
// same root is rejected; zero the leaf grads before reusing leaves.
void backward(const Var& root);
void zero_grads(const std::vector<Var>& vars);

// ---- ops ----------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
// [m,n] + broadcast of a [1,n] row (bias addition).
Var add_rowvec(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);       // elementwise
Var scale(const Var& a, double c);         // by a host scalar
Var tanh(const Var& a);
Var relu(const Var& a);
Var row_softmax(const Var& a);
Var row_log_softmax(const Var& a);
// Rows scaled to unit L2 norm; a zero row is an error, never an epsilon.
Var l2_normalize_rows(const Var& a);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t r0, std::size_t r1);  // [r0, r1)
Var reshape(const Var& a, const Shape& shape);
// Selects table rows by index; gradient scatter-adds into the table.
Var gather_rows(const Var& table, const std::vector<std::size_t>& idx);
Var sum(const Var& a);        // scalar
Var mean(const Var& a);       // scalar, over all elements
Var mean_rows(const Var& a);  // [1,n], column means
// mean over all elements of (a-b)^2
Var mse(const Var& a, const Var& b);
// Value copy that blocks gradient flow into a's subgraph.
Var detach(const Var& a);

}  // namespace rscl
