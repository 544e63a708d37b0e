#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stpp {

class Tensor;
struct TensorImpl;

// One recorded operation. Owned by the impl of its output tensor, so a node
// stays alive exactly as long as its output is reachable.
struct Node {
  std::vector<Tensor> inputs;
  TensorImpl* out = nullptr;
  std::function<void(Node&)> backprop;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data when requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // producing op; null for leaves
};

// Dense 64-bit float tensor with value semantics over shared storage.
// Immutable after creation except for grad (and leaf data updated by an
// optimizer between graph constructions).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row_vector(std::vector<double> v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rows() const { return impl_->shape[0]; }
  int cols() const { return impl_->shape[1]; }
  std::size_t numel() const { return impl_->data.size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }

  double value() const;  // scalar tensors only
  double at(int r, int c) const { return impl_->data[static_cast<std::size_t>(r) * cols() + c]; }

  void zero_grad();
  Tensor detached_copy() const;  // same values, fresh leaf

  TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Thread-local graph recording switch. Ops record nodes only while enabled.
bool grad_enabled();
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool prev_;
};

// --- primitives -----------------------------------------------------------
// Shape rules are strict: the only broadcast is a 1xM row vector added to the
// rows of an NxM matrix (add_rowvec).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& m, const Tensor& row);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
// Row i is a softmax over columns 0..i; entries above the diagonal are zero.
Tensor causal_row_softmax(const Tensor& a);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor row(const Tensor& a, int index);
// w is 1x2; returns w[0]*x0 + w[1]*x1 with gradients to all three.
Tensor blend2(const Tensor& w, const Tensor& x0, const Tensor& x1);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// Reverse pass from a scalar loss. Gradients accumulate additively across
// calls; zero_grad resets them.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-8),
// with central differences of half-width `step`.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step);

}  // namespace stpp
