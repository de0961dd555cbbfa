#include "senh/nn/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "senh/common.hpp"

namespace senh::nn {

namespace {

thread_local bool g_grad_enabled = true;

void require_shape_match(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return from(shape, std::vector<double>(shape_size(shape), 0.0),
              requires_grad);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw std::invalid_argument("tensor: values do not match shape");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
  return node_->value[0];
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::backward() const {
  if (size() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  if (!node_->requires_grad)
    throw std::invalid_argument("backward: root does not require grad");

  // iterative post-order DFS for topological order
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      detail::Node* parent = node->parents[idx++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

Tensor make_op(std::vector<std::size_t> shape, std::vector<double> values,
               const std::vector<Tensor>& parents,
               std::function<void(detail::Node&)> backward_fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node()->requires_grad = true;
  for (const auto& p : parents) out.node()->parents.push_back(p.node());
  out.node()->backward_fn = std::move(backward_fn);
  return out;
}

// ---- element-wise binary ----

Tensor add(const Tensor& a, const Tensor& b) {
  require_shape_match(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] + b.values()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    auto &pa = *n.parents[0], &pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pb.grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_shape_match(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] - b.values()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    auto &pa = *n.parents[0], &pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_shape_match(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] * b.values()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    auto &pa = *n.parents[0], &pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_shape_match(a, b, "div");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] / b.values()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    auto &pa = *n.parents[0], &pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        pa.grad[i] += n.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        pb.grad[i] -= n.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
    }
  });
}

// ---- scalar / constant variants ----

Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  return make_op(a.shape(), std::move(v), {a}, [c](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += c * n.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + c;
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i];
  });
}

Tensor mul_const(const Tensor& a, const std::vector<double>& c) {
  if (c.size() != a.size())
    throw std::invalid_argument("mul_const: size mismatch");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c[i];
  return make_op(a.shape(), std::move(v), {a}, [c](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += c[i] * n.grad[i];
  });
}

Tensor const_sub(const std::vector<double>& c, const Tensor& a) {
  if (c.size() != a.size())
    throw std::invalid_argument("const_sub: size mismatch");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c[i] - a.values()[i];
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] -= n.grad[i];
  });
}

Tensor clamp_min(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] < c ? c : a.values()[i];
  return make_op(a.shape(), std::move(v), {a}, [c](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      if (pa.value[i] >= c) pa.grad[i] += n.grad[i];
  });
}

// ---- element-wise functions ----

Tensor exp(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a.values()[i]);
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      pa.grad[i] += n.grad[i] * n.value[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.values()[i]);
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      pa.grad[i] += n.grad[i] / pa.value[i];
  });
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a.values()[i]);
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      pa.grad[i] += n.grad[i] * 0.5 / n.value[i];
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] * a.values()[i];
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      pa.grad[i] += 2.0 * pa.value[i] * n.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
  return make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      pa.grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Tensor prelu(const Tensor& x, const Tensor& alpha) {
  if (alpha.size() != 1)
    throw std::invalid_argument("prelu: alpha must be scalar");
  const double a = alpha.values()[0];
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double xv = x.values()[i];
    v[i] = xv > 0.0 ? xv : a * xv;
  }
  return make_op(x.shape(), std::move(v), {x, alpha}, [](detail::Node& n) {
    auto &px = *n.parents[0], &pa = *n.parents[1];
    const double a = pa.value[0];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        px.grad[i] += n.grad[i] * (px.value[i] > 0.0 ? 1.0 : a);
    }
    if (pa.requires_grad) {
      pa.ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < n.size(); ++i)
        if (px.value[i] <= 0.0) acc += n.grad[i] * px.value[i];
      pa.grad[0] += acc;
    }
  });
}

// ---- linear layers ----

Tensor affine(const Tensor& w, const Tensor& b, const Tensor& x) {
  if (w.shape().size() != 2 || x.shape().size() != 2 ||
      b.shape().size() != 1)
    throw std::invalid_argument("affine: bad ranks");
  const std::size_t out_ch = w.rows(), in_ch = w.cols();
  const std::size_t T = x.cols();
  if (x.rows() != in_ch || b.size() != out_ch)
    throw std::invalid_argument("affine: shape mismatch");

  std::vector<double> v(out_ch * T);
  const auto& wv = w.values();
  const auto& xv = x.values();
  const auto& bv = b.values();
  for (std::size_t o = 0; o < out_ch; ++o)
    for (std::size_t t = 0; t < T; ++t) {
      double acc = bv[o];
      for (std::size_t i = 0; i < in_ch; ++i)
        acc += wv[o * in_ch + i] * xv[i * T + t];
      v[o * T + t] = acc;
    }
  return make_op(
      {out_ch, T}, std::move(v), {w, b, x},
      [out_ch, in_ch, T](detail::Node& n) {
        auto &pw = *n.parents[0], &pb = *n.parents[1], &px = *n.parents[2];
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t i = 0; i < in_ch; ++i) {
              double acc = 0.0;
              for (std::size_t t = 0; t < T; ++t)
                acc += n.grad[o * T + t] * px.value[i * T + t];
              pw.grad[o * in_ch + i] += acc;
            }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t o = 0; o < out_ch; ++o) {
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += n.grad[o * T + t];
            pb.grad[o] += acc;
          }
        }
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t i = 0; i < in_ch; ++i)
            for (std::size_t t = 0; t < T; ++t) {
              double acc = 0.0;
              for (std::size_t o = 0; o < out_ch; ++o)
                acc += pw.value[o * in_ch + i] * n.grad[o * T + t];
              px.grad[i * T + t] += acc;
            }
        }
      });
}

Tensor causal_conv1d(const Tensor& w, const Tensor& b, const Tensor& x,
                     std::size_t dilation) {
  if (w.shape().size() != 3 || x.shape().size() != 2 ||
      b.shape().size() != 1)
    throw std::invalid_argument("conv1d: bad ranks");
  const std::size_t out_ch = w.shape()[0], in_ch = w.shape()[1],
                    k = w.shape()[2];
  const std::size_t T = x.cols();
  if (x.rows() != in_ch || b.size() != out_ch)
    throw std::invalid_argument("conv1d: shape mismatch");
  if (dilation == 0) throw std::invalid_argument("conv1d: dilation zero");

  // out[o,t] = b[o] + sum_{i,j} w[o,i,j] * x[i, t - (k-1-j)*dilation],
  // indices before the signal start read as zero (left causal pad)
  std::vector<double> v(out_ch * T);
  const auto& wv = w.values();
  const auto& xv = x.values();
  const auto& bv = b.values();
  for (std::size_t o = 0; o < out_ch; ++o)
    for (std::size_t t = 0; t < T; ++t) {
      double acc = bv[o];
      for (std::size_t j = 0; j < k; ++j) {
        const long src = long(t) - long((k - 1 - j) * dilation);
        if (src < 0) continue;
        const double* wrow = &wv[(o * in_ch) * k + j];
        for (std::size_t i = 0; i < in_ch; ++i)
          acc += wrow[i * k] * xv[i * T + std::size_t(src)];
      }
      v[o * T + t] = acc;
    }
  return make_op(
      {out_ch, T}, std::move(v), {w, b, x},
      [out_ch, in_ch, k, T, dilation](detail::Node& n) {
        auto &pw = *n.parents[0], &pb = *n.parents[1], &px = *n.parents[2];
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t i = 0; i < in_ch; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < T; ++t) {
                  const long src = long(t) - long((k - 1 - j) * dilation);
                  if (src >= 0)
                    acc += n.grad[o * T + t] * px.value[i * T + src];
                }
                pw.grad[(o * in_ch + i) * k + j] += acc;
              }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t o = 0; o < out_ch; ++o) {
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += n.grad[o * T + t];
            pb.grad[o] += acc;
          }
        }
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t j = 0; j < k; ++j) {
              const std::size_t shift = (k - 1 - j) * dilation;
              for (std::size_t t = shift; t < T; ++t) {
                const std::size_t src = t - shift;
                const double g = n.grad[o * T + t];
                for (std::size_t i = 0; i < in_ch; ++i)
                  px.grad[i * T + src] +=
                      g * pw.value[(o * in_ch + i) * k + j];
              }
            }
        }
      });
}

Tensor narrow_cols(const Tensor& x, std::size_t keep) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("narrow_cols: rank must be 2");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (keep > cols) throw std::invalid_argument("narrow_cols: keep > cols");
  std::vector<double> v(rows * keep);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < keep; ++c)
      v[r * keep + c] = x.values()[r * cols + c];
  return make_op({rows, keep}, std::move(v), {x},
                 [rows, cols, keep](detail::Node& n) {
                   auto& px = *n.parents[0];
                   px.ensure_grad();
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t c = 0; c < keep; ++c)
                       px.grad[r * cols + c] += n.grad[r * keep + c];
                 });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  const double s = pairwise_sum(a.values());
  return make_op({1}, {s}, {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < pa.size(); ++i) pa.grad[i] += n.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / double(a.size());
  const double s = pairwise_sum(a.values()) * inv;
  return make_op({1}, {s}, {a}, [inv](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < pa.size(); ++i)
      pa.grad[i] += n.grad[0] * inv;
  });
}

Tensor dot_const(const Tensor& a, const std::vector<double>& c) {
  if (c.size() != a.size())
    throw std::invalid_argument("dot_const: size mismatch");
  std::vector<double> prods(a.size());
  for (std::size_t i = 0; i < prods.size(); ++i)
    prods[i] = a.values()[i] * c[i];
  const double s = pairwise_sum(prods);
  return make_op({1}, {s}, {a}, [c](detail::Node& n) {
    auto& pa = *n.parents[0];
    pa.ensure_grad();
    for (std::size_t i = 0; i < pa.size(); ++i)
      pa.grad[i] += n.grad[0] * c[i];
  });
}

Tensor scalar_mul_const(const Tensor& s, const std::vector<double>& c) {
  if (s.size() != 1)
    throw std::invalid_argument("scalar_mul_const: s must be scalar");
  std::vector<double> v(c.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = s.values()[0] * c[i];
  return make_op({c.size()}, std::move(v), {s}, [c](detail::Node& n) {
    auto& ps = *n.parents[0];
    ps.ensure_grad();
    double acc = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) acc += n.grad[i] * c[i];
    ps.grad[0] += acc;
  });
}

}  // namespace senh::nn
