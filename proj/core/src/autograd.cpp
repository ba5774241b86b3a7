#include "conglude/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "conglude/errors.hpp"

namespace conglude {

namespace detail {
Tensor& Node::grad_buffer() {
  if (grad.empty() || !grad.same_shape(value)) grad = Tensor(value.shape(), 0.0);
  return grad;
}
}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Var make_result(Tensor value, std::vector<Var> operands, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = std::any_of(operands.begin(), operands.end(),
                             [](const Var& v) { return v.requires_grad(); });
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(operands.size());
      for (const auto& v : operands) node->parents.push_back(v.shared());
      node->backward = std::move(fn);
    }
  }
  return Var(std::move(node));
}

void require_rank2(const Var& a, const char* op) {
  if (a.value().rank() != 2) throw ShapeError(std::string(op) + ": operand must be rank 2");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
}

Tensor* grad_of(Node& parent) { return parent.requires_grad ? &parent.grad_buffer() : nullptr; }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::SiLU: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::GELU: {
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// c[n,m] += a[n,k] * b[k,m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[n,m] += a[n,k] * b[m,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// c[k,m] += a[n,k]^T * b[n,m]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

double Var::item() const {
  if (node_->value.size() != 1) throw ContractError("item() on non-scalar " + node_->value.shape_string());
  return node_->value[0];
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& loss) {
  if (!loss.valid() || loss.value().size() != 1) {
    throw ContractError("backward() requires a scalar loss, got " +
                        (loss.valid() ? loss.value().shape_string() : std::string("null")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->backward && parent->parents.empty()) {
        continue;  // leaf: nothing to expand
      }
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer().fill(0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Free interior gradients; leaves keep theirs.
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "silu") return Activation::SiLU;
  if (name == "gelu") return Activation::GELU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  throw ContractError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::SiLU: return "silu";
    case Activation::GELU: return "gelu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::SiLU: return x * sigmoid(x);
    case Activation::GELU: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

Var matmul(const Var& a, const Var& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions " + a.value().shape_string() + " x " + b.value().shape_string());
  }
  Tensor out = Tensor::matrix(n, m);
  gemm_nn(a.value().storage().data(), b.value().storage().data(), out.storage().data(), n, k, m);
  return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.storage().data();
    if (Tensor* ga = grad_of(pa)) gemm_nt(g, pb.value.storage().data(), ga->storage().data(), n, m, k);
    if (Tensor* gb = grad_of(pb)) gemm_tn(pa.value.storage().data(), g, gb->storage().data(), n, k, m);
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_bt: inner dimensions " + a.value().shape_string() + " x " +
                     b.value().shape_string() + "^T");
  }
  Tensor out = Tensor::matrix(n, m);
  gemm_nt(a.value().storage().data(), b.value().storage().data(), out.storage().data(), n, k, m);
  return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.storage().data();
    // dA = G B, dB = G^T A
    if (Tensor* ga = grad_of(pa)) gemm_nn(g, pb.value.storage().data(), ga->storage().data(), n, m, k);
    if (Tensor* gb = grad_of(pb)) gemm_tn(g, pa.value.storage().data(), gb->storage().data(), n, m, k);
  });
}

namespace {
template <typename Fwd, typename Bwd>
Var binary_same_shape(const Var& a, const Var& b, const char* op, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, op);
  Tensor out(a.value().shape());
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_result(std::move(out), {a, b}, [bwd](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    Tensor* ga = grad_of(pa);
    Tensor* gb = grad_of(pb);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      auto [da, db] = bwd(pa.value[i], pb.value[i], self.grad[i]);
      if (ga) (*ga)[i] += da;
      if (gb) (*gb)[i] += db;
    }
  });
}

template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd fwd, Bwd bwd) {
  Tensor out(a.value().shape());
  const auto& av = a.value().storage();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(std::move(out), {a}, [bwd](Node& self) {
    Node& pa = *self.parents[0];
    Tensor* ga = grad_of(pa);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      (*ga)[i] += self.grad[i] * bwd(pa.value[i], self.value[i]);
    }
  });
}
}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Var mul(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Var add_row(const Var& a, const Var& row) {
  require_rank2(a, "add_row");
  const std::size_t n = a.rows(), m = a.cols();
  if (row.value().rank() != 2 || row.rows() != 1 || row.cols() != m) {
    throw ShapeError("add_row: expected [1x" + std::to_string(m) + "], got " + row.value().shape_string());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) += row.value()(0, j);
  return make_result(std::move(out), {a, row}, [n, m](Node& self) {
    if (Tensor* ga = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (Tensor* gr = grad_of(*self.parents[1])) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) (*gr)[j] += self.grad(i, j);
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  require_rank2(a, "mul_col");
  const std::size_t n = a.rows(), m = a.cols();
  if (col.value().rank() != 2 || col.rows() != n || col.cols() != 1) {
    throw ShapeError("mul_col: expected [" + std::to_string(n) + "x1], got " + col.value().shape_string());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) *= col.value()[i];
  return make_result(std::move(out), {a, col}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pc = *self.parents[1];
    Tensor* ga = grad_of(pa);
    Tensor* gc = grad_of(pc);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = pc.value[i];
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double g = self.grad(i, j);
        if (ga) (*ga)(i, j) += g * c;
        acc += g * pa.value(i, j);
      }
      if (gc) (*gc)[i] += acc;
    }
  });
}

Var div_col(const Var& a, const Var& col) {
  require_rank2(a, "div_col");
  const std::size_t n = a.rows(), m = a.cols();
  if (col.value().rank() != 2 || col.rows() != n || col.cols() != 1) {
    throw ShapeError("div_col: expected [" + std::to_string(n) + "x1], got " + col.value().shape_string());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) /= col.value()[i];
  return make_result(std::move(out), {a, col}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pc = *self.parents[1];
    Tensor* ga = grad_of(pa);
    Tensor* gc = grad_of(pc);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = pc.value[i];
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double g = self.grad(i, j);
        if (ga) (*ga)(i, j) += g / c;
        acc -= g * pa.value(i, j) / (c * c);
      }
      if (gc) (*gc)[i] += acc;
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var activation(const Var& a, Activation act) {
  if (act == Activation::Identity) return a;
  return unary(a, [act](double x) { return activate(act, x); },
               [act](double x, double) { return activate_grad(act, x); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return sigmoid(x); });
}

Var dropout(const Var& a, double rate, bool train, std::mt19937_64* rng) {
  if (rate < 0.0 || rate > 1.0) throw ContractError("dropout rate must lie in [0,1]");
  if (!train || rate == 0.0) return a;
  if (rng == nullptr) throw ContractError("dropout in train mode requires a generator");
  Tensor mask(a.value().shape());
  if (rate < 1.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = u(*rng) < rate ? 0.0 : keep_scale;
  }
  return mul(a, Var::constant(std::move(mask)));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out = Tensor::matrix(n, total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.value().row_span(i).data(), p.cols(), &out(i, offset));
    offset += p.cols();
  }
  return make_result(std::move(out), parts, [n, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* g = grad_of(*self.parents[k])) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) (*g)(i, j) += self.grad(i, off + j);
      }
      off += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t m = parts.front().cols();
  std::vector<std::size_t> heights;
  std::vector<double> data;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != m) throw ShapeError("concat_rows: column count mismatch");
    heights.push_back(p.rows());
    data.insert(data.end(), p.value().storage().begin(), p.value().storage().end());
  }
  const std::size_t total = data.size() / std::max<std::size_t>(m, 1);
  Tensor out({m == 0 ? 0 : total, m}, std::move(data));
  return make_result(std::move(out), parts, [heights, m](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < heights.size(); ++k) {
      const std::size_t len = heights[k] * m;
      if (Tensor* g = grad_of(*self.parents[k])) {
        for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  if (begin > end || end > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t m = a.cols();
  std::vector<double> data(a.value().storage().begin() + static_cast<std::ptrdiff_t>(begin * m),
                           a.value().storage().begin() + static_cast<std::ptrdiff_t>(end * m));
  Tensor out({end - begin, m}, std::move(data));
  return make_result(std::move(out), {a}, [begin, m](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * m + i] += self.grad[i];
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  if (begin > end || end > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t n = a.rows(), w = end - begin;
  Tensor out = Tensor::matrix(n, w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = a.value()(i, begin + j);
  return make_result(std::move(out), {a}, [n, w, begin](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) (*g)(i, begin + j) += self.grad(i, j);
    }
  });
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& index) {
  require_rank2(a, "gather_rows");
  const std::size_t m = a.cols();
  Tensor out = Tensor::matrix(index.size(), m);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(a.value().row_span(index[i]).data(), m, &out(i, 0));
  }
  return make_result(std::move(out), {a}, [index, m](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < index.size(); ++i) {
        double* dst = &(*g)(index[i], 0);
        const double* src = &self.grad(i, 0);
        for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
      }
    }
  });
}

Var broadcast_rows(const Var& row, std::size_t n) {
  require_rank2(row, "broadcast_rows");
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a single row");
  return gather_rows(row, std::vector<std::size_t>(n, 0));
}

Var segment_mean(const Var& a, const std::vector<std::size_t>& segment, std::size_t num_segments) {
  require_rank2(a, "segment_mean");
  if (segment.size() != a.rows()) throw ShapeError("segment_mean: one segment id per row required");
  const std::size_t m = a.cols();
  std::vector<double> inv_count(num_segments, 0.0);
  for (std::size_t s : segment) {
    if (s >= num_segments) throw ShapeError("segment_mean: segment id out of range");
    inv_count[s] += 1.0;
  }
  for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
  Tensor out = Tensor::matrix(num_segments, m);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    double* dst = &out(segment[i], 0);
    const double* src = a.value().row_span(i).data();
    for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
  }
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t j = 0; j < m; ++j) out(s, j) *= inv_count[s];
  return make_result(std::move(out), {a}, [segment, inv_count, m](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < segment.size(); ++i) {
        const double w = inv_count[segment[i]];
        double* dst = &(*g)(i, 0);
        const double* src = &self.grad(segment[i], 0);
        for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
      }
    }
  });
}

Var mean_rows(const Var& a) {
  require_rank2(a, "mean_rows");
  if (a.rows() == 0) throw ShapeError("mean_rows: no rows");
  return segment_mean(a, std::vector<std::size_t>(a.rows(), 0), 1);
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  return make_result(Tensor::scalar(s), {a}, [](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) {
      const double up = self.grad[0];
      for (double& v : g->storage()) v += up;
    }
  });
}

Var mean_all(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean_all: empty operand");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var row_sq_norm(const Var& a) {
  require_rank2(a, "row_sq_norm");
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.value()(i, j) * a.value()(i, j);
    out[i] = s;
  }
  return make_result(std::move(out), {a}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    if (Tensor* g = grad_of(pa)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) (*g)(i, j) += 2.0 * pa.value(i, j) * self.grad[i];
    }
  });
}

Var row_norm(const Var& a) {
  require_rank2(a, "row_norm");
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.value()(i, j) * a.value()(i, j);
    out[i] = std::sqrt(s);
  }
  return make_result(std::move(out), {a}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    if (Tensor* g = grad_of(pa)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double norm = self.value[i];
        if (norm == 0.0) continue;
        const double f = self.grad[i] / norm;
        for (std::size_t j = 0; j < m; ++j) (*g)(i, j) += f * pa.value(i, j);
      }
    }
  });
}

Var normalize_rows(const Var& a) {
  require_rank2(a, "normalize_rows");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> norms(n);
  Tensor out = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += out(i, j) * out(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0)) throw ContractError("normalize_rows: zero-norm row " + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) out(i, j) /= norms[i];
  }
  return make_result(std::move(out), {a}, [n, m, norms](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) {
      // d(u)/d(a) = (I - u u^T) / |a|
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += self.grad(i, j) * self.value(i, j);
        for (std::size_t j = 0; j < m; ++j)
          (*g)(i, j) += (self.grad(i, j) - dot * self.value(i, j)) / norms[i];
      }
    }
  });
}

Var pick(const Var& a, std::size_t r, std::size_t c) {
  require_rank2(a, "pick");
  if (r >= a.rows() || c >= a.cols()) throw ShapeError("pick: index out of range");
  return make_result(Tensor::scalar(a.value()(r, c)), {a}, [r, c](Node& self) {
    if (Tensor* g = grad_of(*self.parents[0])) (*g)(r, c) += self.grad[0];
  });
}

Var logsumexp_row(const Var& a) {
  require_rank2(a, "logsumexp_row");
  if (a.rows() != 1 || a.cols() == 0) throw ShapeError("logsumexp_row: expected a non-empty row");
  const auto& v = a.value().storage();
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  const double out = mx + std::log(s);
  return make_result(Tensor::scalar(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (Tensor* g = grad_of(pa)) {
      const double lse = self.value[0];
      for (std::size_t i = 0; i < pa.value.size(); ++i)
        (*g)[i] += self.grad[0] * std::exp(pa.value[i] - lse);
    }
  });
}

}  // namespace conglude
