// Adam with bias correction and global gradient-norm clipping.
#pragma once

#include <cstdint>
#include <vector>

#include "senh/nn/tensor.hpp"

namespace senh::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;  // first moments, flat parameter order
  std::vector<double> v;  // second moments
  std::uint64_t step = 0;

  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

// One Adam update over params' accumulated grads. State must match the
// total parameter count (init() on first use).
void adam_step(std::vector<Tensor>& params, AdamState& state,
               const AdamConfig& cfg);

// Scales all grads so the global L2 norm is at most max_norm; no-op
// when already within the bound. Returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace senh::nn
