#include "coco/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace coco {

namespace {

void check_finite(const std::vector<double>& values, const char* op_name) {
  for (double v : values)
    if (!std::isfinite(v))
      throw DomainError(std::string(op_name) + " produced a non-finite value");
}

void check_defined(const Tensor& t, const char* op_name) {
  if (!t.defined()) throw StateError(std::string(op_name) + " called on an empty tensor");
}

}  // namespace

TensorNode& Tensor::node() const {
  if (!node_) throw StateError("operation on an empty tensor");
  return *node_;
}

Tensor make_op(int rows, int cols, std::vector<double> values, std::vector<Tensor> parents,
               const char* op_name) {
  check_finite(values, op_name);
  auto node = std::make_shared<TensorNode>();
  node->rows = rows;
  node->cols = cols;
  node->values = std::move(values);
  node->parents.reserve(parents.size());
  for (const auto& p : parents) node->parents.push_back(p.handle());
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  if (rows < 0 || cols < 0) throw ShapeError("negative tensor dimension");
  Tensor t = make_op(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                     {}, "zeros");
  t.node().requires_grad = requires_grad;
  return t;
}

Tensor Tensor::ones(int rows, int cols) {
  if (rows < 0 || cols < 0) throw ShapeError("negative tensor dimension");
  return make_op(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 1.0), {},
                 "ones");
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (rows < 0 || cols < 0) throw ShapeError("negative tensor dimension");
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw ShapeError("value count does not match tensor shape");
  Tensor t = make_op(rows, cols, std::move(values), {}, "from_values");
  t.node().requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value) { return from_values(1, 1, {value}); }

double Tensor::at(int r, int c) const {
  const TensorNode& n = node();
  if (r < 0 || c < 0 || r >= n.rows || c >= n.cols) throw ShapeError("tensor index out of range");
  return n.values[static_cast<std::size_t>(r) * n.cols + c];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw StateError("tensor has no accumulated gradient");
  return node_->grad;
}

void Tensor::zero_grad() { node().grad.clear(); }

void Tensor::backward() {
  TensorNode& out = node();
  if (out.rows != 1 || out.cols != 1) throw DomainError("backward requires a scalar output");

  // Post-order DFS over parent edges; reversing it yields an order where every
  // node's gradient is complete before its backward_fn runs.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(&out, 0);
  visited.insert(&out);
  while (!stack.empty()) {
    auto& [current, next_parent] = stack.back();
    if (next_parent < current->parents.size()) {
      TensorNode* parent = current->parents[next_parent].get();
      ++next_parent;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  out.ensure_grad();
  out.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.cols() != b.rows()) throw ShapeError("matmul inner dimensions disagree");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      const std::size_t orow = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) out[orow + j] += aip * bv[brow + j];
    }
  Tensor result = make_op(m, n, std::move(out), {a, b}, "matmul");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  TensorNode* pb = b.handle().get();
  self->backward_fn = [self, pa, pb, m, k, n]() {
    pa->ensure_grad();
    pb->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double g = self->grad[static_cast<std::size_t>(i) * n + j];
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          pa->grad[static_cast<std::size_t>(i) * k + p] +=
              g * pb->values[static_cast<std::size_t>(p) * n + j];
          pb->grad[static_cast<std::size_t>(p) * n + j] +=
              g * pa->values[static_cast<std::size_t>(i) * k + p];
        }
      }
  };
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  const bool same_shape = a.rows() == b.rows() && a.cols() == b.cols();
  const bool row_broadcast = b.rows() == 1 && b.cols() == a.cols();
  if (!same_shape && !row_broadcast)
    throw ShapeError("add requires matching shapes or a broadcastable row vector");
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (int i = 0; i < rows; ++i) {
    const std::size_t brow = same_shape ? static_cast<std::size_t>(i) * cols : 0;
    const std::size_t orow = static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) out[orow + j] += bv[brow + j];
  }
  Tensor result = make_op(rows, cols, std::move(out), {a, b}, "add");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  TensorNode* pb = b.handle().get();
  self->backward_fn = [self, pa, pb, rows, cols, same_shape]() {
    pa->ensure_grad();
    pb->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
    if (same_shape) {
      for (std::size_t i = 0; i < self->grad.size(); ++i) pb->grad[i] += self->grad[i];
    } else {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          pb->grad[j] += self->grad[static_cast<std::size_t>(i) * cols + j];
    }
  };
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("elementwise mul requires matching shapes");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tensor result = make_op(a.rows(), a.cols(), std::move(out), {a, b}, "mul");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  TensorNode* pb = b.handle().get();
  self->backward_fn = [self, pa, pb]() {
    pa->ensure_grad();
    pb->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) {
      pa->grad[i] += self->grad[i] * pb->values[i];
      pb->grad[i] += self->grad[i] * pa->values[i];
    }
  };
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  check_defined(a, "scale");
  std::vector<double> out(a.values());
  for (double& v : out) v *= factor;
  Tensor result = make_op(a.rows(), a.cols(), std::move(out), {a}, "scale");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, factor]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += factor * self->grad[i];
  };
  return result;
}

Tensor relu(const Tensor& a) {
  check_defined(a, "relu");
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Tensor result = make_op(a.rows(), a.cols(), std::move(out), {a}, "relu");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      if (pa->values[i] > 0.0) pa->grad[i] += self->grad[i];
  };
  return result;
}

Tensor tanh(const Tensor& a) {
  check_defined(a, "tanh");
  std::vector<double> out(a.values());
  for (double& v : out) v = std::tanh(v);
  Tensor result = make_op(a.rows(), a.cols(), std::move(out), {a}, "tanh");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      pa->grad[i] += self->grad[i] * (1.0 - self->values[i] * self->values[i]);
  };
  return result;
}

Tensor exp(const Tensor& a) {
  check_defined(a, "exp");
  std::vector<double> out(a.values());
  for (double& v : out) v = std::exp(v);
  Tensor result = make_op(a.rows(), a.cols(), std::move(out), {a}, "exp");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      pa->grad[i] += self->grad[i] * self->values[i];
  };
  return result;
}

Tensor log(const Tensor& a) {
  check_defined(a, "log");
  std::vector<double> out(a.values());
  for (double& v : out) v = std::log(v);
  Tensor result = make_op(a.rows(), a.cols(), std::move(out), {a}, "log");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      pa->grad[i] += self->grad[i] / pa->values[i];
  };
  return result;
}

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor result = make_op(1, 1, {total}, {a}, "sum");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa]() {
    pa->ensure_grad();
    for (double& g : pa->grad) g += self->grad[0];
  };
  return result;
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  if (a.size() == 0) throw DomainError("mean of an empty tensor");
  double total = 0.0;
  for (double v : a.values()) total += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor result = make_op(1, 1, {total * inv}, {a}, "mean");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, inv]() {
    pa->ensure_grad();
    for (double& g : pa->grad) g += self->grad[0] * inv;
  };
  return result;
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(j) * rows + i] = av[static_cast<std::size_t>(i) * cols + j];
  Tensor result = make_op(cols, rows, std::move(out), {a}, "transpose");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, rows, cols]() {
    pa->ensure_grad();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        pa->grad[static_cast<std::size_t>(i) * cols + j] +=
            self->grad[static_cast<std::size_t>(j) * rows + i];
  };
  return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one tensor");
  for (const auto& p : parts) check_defined(p, "concat_rows");
  const int cols = parts.front().cols();
  int rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows column counts disagree");
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor result = make_op(rows, cols, std::move(out), parts, "concat_rows");
  TensorNode* self = result.handle().get();
  std::vector<TensorNode*> parent_nodes;
  parent_nodes.reserve(parts.size());
  for (const auto& p : parts) parent_nodes.push_back(p.handle().get());
  self->backward_fn = [self, parent_nodes]() {
    std::size_t offset = 0;
    for (TensorNode* parent : parent_nodes) {
      parent->ensure_grad();
      for (std::size_t i = 0; i < parent->grad.size(); ++i)
        parent->grad[i] += self->grad[offset + i];
      offset += parent->grad.size();
    }
  };
  return result;
}

Tensor row_l2_normalize(const Tensor& a) {
  check_defined(a, "row_l2_normalize");
  const int rows = a.rows(), cols = a.cols();
  const auto& av = a.values();
  std::vector<double> out(a.size());
  std::vector<double> norms(rows);
  for (int i = 0; i < rows; ++i) {
    double sq = 0.0;
    const std::size_t base = static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) sq += av[base + j] * av[base + j];
    const double norm = std::sqrt(sq);
    if (norm <= 1e-12) throw DomainError("row_l2_normalize on a row with near-zero norm");
    norms[i] = norm;
    for (int j = 0; j < cols; ++j) out[base + j] = av[base + j] / norm;
  }
  Tensor result = make_op(rows, cols, std::move(out), {a}, "row_l2_normalize");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, rows, cols, norms]() {
    pa->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += self->grad[base + j] * self->values[base + j];
      for (int j = 0; j < cols; ++j)
        pa->grad[base + j] +=
            (self->grad[base + j] - self->values[base + j] * dot) / norms[i];
    }
  };
  return result;
}

Tensor log_softmax(const Tensor& a) {
  check_defined(a, "log_softmax");
  if (a.cols() == 0) throw ShapeError("log_softmax on a zero-column tensor");
  const int rows = a.rows(), cols = a.cols();
  const auto& av = a.values();
  std::vector<double> out(a.size());
  for (int i = 0; i < rows; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * cols;
    double row_max = av[base];
    for (int j = 1; j < cols; ++j) row_max = std::max(row_max, av[base + j]);
    double accum = 0.0;
    for (int j = 0; j < cols; ++j) accum += std::exp(av[base + j] - row_max);
    const double lse = row_max + std::log(accum);
    for (int j = 0; j < cols; ++j) out[base + j] = av[base + j] - lse;
  }
  Tensor result = make_op(rows, cols, std::move(out), {a}, "log_softmax");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, rows, cols]() {
    pa->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * cols;
      double grad_total = 0.0;
      for (int j = 0; j < cols; ++j) grad_total += self->grad[base + j];
      for (int j = 0; j < cols; ++j)
        pa->grad[base + j] +=
            self->grad[base + j] - std::exp(self->values[base + j]) * grad_total;
    }
  };
  return result;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  check_defined(a, "gather_rows");
  const int cols = a.cols();
  const auto& av = a.values();
  std::vector<double> out;
  out.reserve(indices.size() * cols);
  for (int idx : indices) {
    if (idx < 0 || idx >= a.rows()) throw DomainError("gather_rows index out of range");
    const std::size_t base = static_cast<std::size_t>(idx) * cols;
    out.insert(out.end(), av.begin() + base, av.begin() + base + cols);
  }
  Tensor result =
      make_op(static_cast<int>(indices.size()), cols, std::move(out), {a}, "gather_rows");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, indices, cols]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t src = i * cols;
      const std::size_t dst = static_cast<std::size_t>(indices[i]) * cols;
      for (int j = 0; j < cols; ++j) pa->grad[dst + j] += self->grad[src + j];
    }
  };
  return result;
}

Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& indices, int out_rows) {
  check_defined(a, "scatter_add_rows");
  if (static_cast<int>(indices.size()) != a.rows())
    throw ShapeError("scatter_add_rows needs one index per input row");
  const int cols = a.cols();
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(out_rows) * cols, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= out_rows)
      throw DomainError("scatter_add_rows index out of range");
    const std::size_t src = i * cols;
    const std::size_t dst = static_cast<std::size_t>(indices[i]) * cols;
    for (int j = 0; j < cols; ++j) out[dst + j] += av[src + j];
  }
  Tensor result = make_op(out_rows, cols, std::move(out), {a}, "scatter_add_rows");
  TensorNode* self = result.handle().get();
  TensorNode* pa = a.handle().get();
  self->backward_fn = [self, pa, indices, cols]() {
    pa->ensure_grad();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t dst = i * cols;
      const std::size_t src = static_cast<std::size_t>(indices[i]) * cols;
      for (int j = 0; j < cols; ++j) pa->grad[dst + j] += self->grad[src + j];
    }
  };
  return result;
}

std::vector<std::vector<double>> tensor_rows(const Tensor& a) {
  check_defined(a, "tensor_rows");
  std::vector<std::vector<double>> rows(a.rows());
  const auto& values = a.values();
  for (int i = 0; i < a.rows(); ++i)
    rows[i].assign(values.begin() + static_cast<std::size_t>(i) * a.cols(),
                   values.begin() + static_cast<std::size_t>(i + 1) * a.cols());
  return rows;
}

Tensor& ParameterSet::add(const std::string& name, Tensor tensor) {
  if (!tensor.defined()) throw StateError("cannot register an empty tensor as " + name);
  auto [it, inserted] = params_.emplace(name, std::move(tensor));
  if (!inserted) throw StateError("duplicate parameter name " + name);
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter " + name);
  return it->second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter " + name);
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& [name, tensor] : params_) tensor.zero_grad();
}

void ParameterSet::merge(const ParameterSet& other) {
  for (const auto& [name, tensor] : other.params_) {
    auto [it, inserted] = params_.emplace(name, tensor);
    (void)it;
    if (!inserted) throw StateError("parameter name collision on merge: " + name);
  }
}

void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& config) {
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step_count));
  for (auto& [name, tensor] : params) {
    if (!tensor.has_grad()) throw OptimError("parameter " + name + " has no gradient");
    const auto& grad = tensor.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != grad.size()) m.assign(grad.size(), 0.0);
    if (v.size() != grad.size()) v.assign(grad.size(), 0.0);
    auto& values = tensor.mutable_values();
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
      if (!std::isfinite(values[i])) throw DomainError("parameter " + name + " became non-finite");
    }
  }
  for (auto& [name, tensor] : params) tensor.zero_grad();
}

}  // namespace coco
