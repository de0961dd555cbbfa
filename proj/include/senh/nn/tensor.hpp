// Minimal reverse-mode differentiation engine over dense real tensors.
//
// Each op records its parents and a pull-back closure; backward() runs
// the closures in reverse topological order. Gradients accumulate into
// leaf tensors until zero_grad(), so a mini-batch is a sequence of
// backward() calls. Graph recording is disabled inside a NoGradGuard.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace senh::nn {

namespace detail {

struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape,
                      bool requires_grad = false);
  static Tensor from(std::vector<std::size_t> shape,
                     std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;
  void zero_grad();

  // Reverse pass from a scalar; seeds d(out)/d(out) = 1.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(std::vector<std::size_t>, std::vector<double>,
                        const std::vector<Tensor>&,
                        std::function<void(detail::Node&)>);
};

// Builds an op node. The backward closure sees the finished node (its
// grad holds d(root)/d(out)) and must accumulate into parents' grads.
// Recording is skipped when grads are disabled or no parent needs them.
Tensor make_op(std::vector<std::size_t> shape, std::vector<double> values,
               const std::vector<Tensor>& parents,
               std::function<void(detail::Node&)> backward_fn);

// element-wise on matching shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// element-wise with scalars / constants
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_const(const Tensor& a, const std::vector<double>& c);
Tensor const_sub(const std::vector<double>& c, const Tensor& a);
Tensor clamp_min(const Tensor& a, double c);

// element-wise functions
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor prelu(const Tensor& x, const Tensor& alpha);  // alpha: scalar leaf

// linear layers; x is [in, T]
Tensor affine(const Tensor& w, const Tensor& b, const Tensor& x);
// w is [out, in, k]; left-padded dilated convolution along T
Tensor causal_conv1d(const Tensor& w, const Tensor& b, const Tensor& x,
                     std::size_t dilation);

// first `keep` columns of a 2-d tensor
Tensor narrow_cols(const Tensor& x, std::size_t keep);

// reductions (pairwise summation) -> scalar tensors
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot_const(const Tensor& a, const std::vector<double>& c);

// scalar tensor times constant vector -> vector
Tensor scalar_mul_const(const Tensor& s, const std::vector<double>& c);

}  // namespace senh::nn
