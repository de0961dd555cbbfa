#include "senh/nn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "senh/common.hpp"

namespace senh::nn {

void NetworkConfig::validate() const {
  if (n_freq == 0 || hidden_channels == 0 || kernel == 0)
    throw std::invalid_argument("network config: zero dimension");
  if (dilation_base == 0)
    throw std::invalid_argument("network config: dilation_base zero");
  if (!causal)
    throw std::invalid_argument("network config: only causal supported");
}

std::size_t NetworkConfig::receptive_field() const {
  std::size_t field = 1, dilation = 1;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    field += (kernel - 1) * dilation;
    dilation *= dilation_base;
  }
  return field;
}

std::size_t NetworkConfig::parameter_count() const {
  const std::size_t h = hidden_channels;
  std::size_t n = h * n_freq + h;                      // input affine
  n += n_blocks * (h * h * kernel + h + 1);            // conv blocks + PReLU
  n += 2 * (n_freq * h + n_freq);                      // two heads
  return n;
}

MatF log_magnitude(const dsp::ComplexSpectrogram& x) {
  MatF out(x.data.rows(), x.data.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::log(std::abs(x.data.data()[i]) + kMagnitudeFloor);
  return out;
}

FeatureStats normalize_features(MatF& feats) {
  const double n = double(feats.size());
  const double mean = pairwise_sum(feats.data()) / n;
  std::vector<double> centered_sq(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const double c = feats.data()[i] - mean;
    centered_sq[i] = c * c;
  }
  const double var = pairwise_sum(centered_sq) / n;
  const double std_dev = std::max(std::sqrt(var), 1e-8);
  for (auto& v : feats.data()) v = (v - mean) / std_dev;
  return {mean, std_dev};
}

MatF make_features(const dsp::ComplexSpectrogram& x) {
  MatF feats = log_magnitude(x);
  normalize_features(feats);
  return feats;
}

Tensor features_tensor(const MatF& feats) {
  return Tensor::from({feats.rows(), feats.cols()}, feats.data());
}

MaskNet::MaskNet(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  allocate();
}

MaskNet::MaskNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  allocate();
  Rng rng(seed);
  auto init_uniform = [&rng](Tensor& t, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / double(fan_in));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  };
  init_uniform(in_w_, cfg_.n_freq);
  for (auto& blk : blocks_) {
    init_uniform(blk.w, cfg_.hidden_channels * cfg_.kernel);
    blk.alpha.values()[0] = 0.25;
  }
  init_uniform(mask_w_, cfg_.hidden_channels);
  init_uniform(var_w_, cfg_.hidden_channels);
  // biases stay zero: the initial mask is 0.5 and lambda is near 1,
  // which keeps the log-posterior term tame at the start of training
}

void MaskNet::allocate() {
  const std::size_t h = cfg_.hidden_channels, f = cfg_.n_freq,
                    k = cfg_.kernel;
  in_w_ = Tensor::zeros({h, f}, true);
  in_b_ = Tensor::zeros({h}, true);
  blocks_.clear();
  std::size_t dilation = 1;
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    Block blk;
    blk.w = Tensor::zeros({h, h, k}, true);
    blk.b = Tensor::zeros({h}, true);
    blk.alpha = Tensor::scalar(0.0, true);
    blk.dilation = dilation;
    dilation *= cfg_.dilation_base;
    blocks_.push_back(std::move(blk));
  }
  mask_w_ = Tensor::zeros({f, h}, true);
  mask_b_ = Tensor::zeros({f}, true);
  var_w_ = Tensor::zeros({f, h}, true);
  var_b_ = Tensor::zeros({f}, true);
}

MaskNet::Output MaskNet::forward(const Tensor& features) const {
  if (features.shape().size() != 2 || features.rows() != cfg_.n_freq)
    throw std::invalid_argument("forward: features must be [n_freq, T]");

  Tensor h = affine(in_w_, in_b_, features);
  for (const auto& blk : blocks_)
    h = add(h, prelu(causal_conv1d(blk.w, blk.b, h, blk.dilation), blk.alpha));

  Output out;
  out.wiener = sigmoid(affine(mask_w_, mask_b_, h));
  out.log_var = affine(var_w_, var_b_, h);

  if (!all_finite(out.wiener.values()) || !all_finite(out.log_var.values()))
    throw std::runtime_error(
        "forward: non-finite activation in network output");
  return out;
}

std::vector<Tensor> MaskNet::parameters() const {
  std::vector<Tensor> params{in_w_, in_b_};
  for (const auto& blk : blocks_) {
    params.push_back(blk.w);
    params.push_back(blk.b);
    params.push_back(blk.alpha);
  }
  params.push_back(mask_w_);
  params.push_back(mask_b_);
  params.push_back(var_w_);
  params.push_back(var_b_);
  return params;
}

std::vector<double> MaskNet::flat_weights() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : parameters())
    flat.insert(flat.end(), p.values().begin(), p.values().end());
  return flat;
}

void MaskNet::set_flat_weights(const std::vector<double>& w) {
  if (w.size() != parameter_count())
    throw std::invalid_argument("set_flat_weights: wrong weight count");
  std::size_t offset = 0;
  for (auto& p : parameters()) {
    std::copy(w.begin() + long(offset), w.begin() + long(offset + p.size()),
              p.values().begin());
    offset += p.size();
  }
}

void MaskNet::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

}  // namespace senh::nn
