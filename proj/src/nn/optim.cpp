#include "senh/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "senh/common.hpp"

namespace senh::nn {

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const AdamConfig& cfg) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  if (state.m.empty()) state.init(total);
  if (state.m.size() != total || state.v.size() != total)
    throw std::invalid_argument("adam_step: state size mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));

  std::size_t offset = 0;
  for (auto& p : params) {
    auto& values = p.values();
    auto& grads = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      double& m = state.m[offset + i];
      double& v = state.v[offset + i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      values[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    offset += values.size();
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  std::vector<double> sq;
  for (auto& p : params)
    for (double g : p.grad()) sq.push_back(g * g);
  const double norm = std::sqrt(pairwise_sum(sq));
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad()) g *= scale;
  }
  return norm;
}

}  // namespace senh::nn
