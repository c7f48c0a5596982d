#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "coco/errors.hpp"

namespace coco {

// Dense float64 tensor of rank <= 2 with reverse-mode autodiff.  Shapes are
// rows x cols; vectors are 1 x n or n x 1, scalars 1 x 1.  Every forward op
// checks its result for NaN/Inf and throws DomainError on the first hit, so
// numeric faults surface at the op that produced them.
struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  std::size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor ones(int rows, int cols);
  static Tensor from_values(int rows, int cols, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node().rows; }
  int cols() const { return node().cols; }
  std::size_t size() const { return node().size(); }

  double at(int r, int c) const;
  const std::vector<double>& values() const { return node().values; }
  std::vector<double>& mutable_values() { return node().values; }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag) { node().requires_grad = flag; }
  bool has_grad() const { return defined() && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  // Runs reverse-mode accumulation from this tensor, which must be a scalar.
  void backward();

  std::shared_ptr<TensorNode> handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  TensorNode& node() const;
  std::shared_ptr<TensorNode> node_;

  friend Tensor make_op(int rows, int cols, std::vector<double> values,
                        std::vector<Tensor> parents, const char* op_name);
};

Tensor matmul(const Tensor& a, const Tensor& b);
// Same shapes, or b a 1 x cols row vector broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Divides each row by its L2 norm; a norm <= 1e-12 raises DomainError.
Tensor row_l2_normalize(const Tensor& a);
// Numerically stable row-wise log softmax.
Tensor log_softmax(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
// out[indices[i], :] += a[i, :] over an out_rows x cols zero tensor.
Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& indices, int out_rows);

// Plain copy of the tensor's rows; detached from the autodiff graph.
std::vector<std::vector<double>> tensor_rows(const Tensor& a);

// Named parameter collection.  std::map keeps iteration order stable by name,
// which pins the optimizer's update order across runs.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }
  void zero_grad();
  void merge(const ParameterSet& other);  // StateError on name collision

  std::map<std::string, Tensor>::iterator begin() { return params_.begin(); }
  std::map<std::string, Tensor>::iterator end() { return params_.end(); }
  std::map<std::string, Tensor>::const_iterator begin() const { return params_.begin(); }
  std::map<std::string, Tensor>::const_iterator end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long long step_count = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One Adam update over every parameter in name order, with bias correction.
// A parameter without an accumulated gradient raises OptimError.  Gradients
// are cleared once the step has been applied.
void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& config);

}  // namespace coco
