#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "conglude/tensor.hpp"

namespace conglude {

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::string name;

  Tensor& grad_buffer();
};
}  // namespace detail

/// Handle to a node of the dynamically recorded computation graph.
///
/// Leaves are either parameters (requires_grad) or constants. Operations
/// record a backward closure only when gradient recording is enabled and at
/// least one operand requires a gradient, so evaluation-mode forwards build
/// no graph and are safe to run concurrently over shared parameters.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value, std::string name);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const std::string& name() const { return node_->name; }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  bool valid() const { return static_cast<bool>(node_); }
  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient. The loss must be a 1 x 1 node.
void backward(const Var& loss);

enum class Activation { Identity, SiLU, GELU, Sigmoid, Tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
double activate(Activation a, double x);

// Differentiable operations on rank-2 values.
Var matmul(const Var& a, const Var& b);             // [n,k] x [k,m]
Var matmul_bt(const Var& a, const Var& b);          // [n,k] x [m,k]^T
Var add(const Var& a, const Var& b);                // same shape
Var sub(const Var& a, const Var& b);                // same shape
Var mul(const Var& a, const Var& b);                // elementwise, same shape
Var add_row(const Var& a, const Var& row);          // [n,m] + [1,m]
Var mul_col(const Var& a, const Var& col);          // [n,m] * [n,1]
Var div_col(const Var& a, const Var& col);          // [n,m] / [n,1]
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var linear(const Var& x, const Var& weight, const Var& bias);  // x W + b
Var activation(const Var& a, Activation act);
Var square(const Var& a);
Var log(const Var& a);
Var softplus(const Var& a);
Var dropout(const Var& a, double rate, bool train, std::mt19937_64* rng);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var gather_rows(const Var& a, const std::vector<std::size_t>& index);
Var broadcast_rows(const Var& row, std::size_t n);

// Averages rows sharing a segment id; empty segments produce zero rows.
Var segment_mean(const Var& a, const std::vector<std::size_t>& segment, std::size_t num_segments);
Var mean_rows(const Var& a);  // [n,m] -> [1,m]
Var sum_all(const Var& a);    // -> [1,1]
Var mean_all(const Var& a);   // -> [1,1]

// Row-wise Euclidean norm [n,m] -> [n,1]. The gradient at a zero row is zero.
Var row_norm(const Var& a);
Var row_sq_norm(const Var& a);
// Rows scaled to unit length; throws ContractError on a zero row.
Var normalize_rows(const Var& a);

Var pick(const Var& a, std::size_t r, std::size_t c);  // -> [1,1]
Var logsumexp_row(const Var& a);                       // [1,n] -> [1,1]

}  // namespace conglude
