// Small causal dilated-convolution masking network with two output
// heads: a sigmoid Wiener-mask head and a linear log-variance head.
#pragma once

#include <cstdint>
#include <vector>

#include "senh/dsp.hpp"
#include "senh/mat.hpp"
#include "senh/nn/tensor.hpp"

namespace senh::nn {

struct NetworkConfig {
  std::size_t n_freq = 257;
  std::size_t hidden_channels = 64;
  std::size_t n_blocks = 3;
  std::size_t kernel = 3;
  std::size_t dilation_base = 2;
  bool causal = true;  // the only supported mode

  void validate() const;
  std::size_t receptive_field() const;  // frames
  std::size_t parameter_count() const;
};

// Input features: log(|X| + eps), normalized per utterance.
MatF log_magnitude(const dsp::ComplexSpectrogram& x);

struct FeatureStats {
  double mean = 0.0;
  double std_dev = 1.0;
};

// In-place per-utterance mean/std normalization; std floored at 1e-8
// so constant inputs (silence) map to zeros.
FeatureStats normalize_features(MatF& feats);

// Combined helper: normalized log-magnitude features of a spectrogram.
MatF make_features(const dsp::ComplexSpectrogram& x);

Tensor features_tensor(const MatF& feats);

class MaskNet {
 public:
  // Weights uniform in +-sqrt(1/fan_in), biases zero, PReLU slope 0.25.
  MaskNet(const NetworkConfig& cfg, std::uint64_t seed);
  // All-zero weights; forward gives mask 0.5 and log_var 0 everywhere.
  explicit MaskNet(const NetworkConfig& cfg);

  struct Output {
    Tensor wiener;   // (0,1) after sigmoid
    Tensor log_var;  // unbounded
  };

  // features: [n_freq, T]. Throws on non-finite activations.
  Output forward(const Tensor& features) const;

  const NetworkConfig& config() const { return cfg_; }

  // Stable parameter order; flat serialization follows it.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const { return cfg_.parameter_count(); }
  std::vector<double> flat_weights() const;
  void set_flat_weights(const std::vector<double>& w);
  void zero_grad();

 private:
  void allocate();

  NetworkConfig cfg_;
  Tensor in_w_, in_b_;
  struct Block {
    Tensor w, b, alpha;
    std::size_t dilation = 1;
  };
  std::vector<Block> blocks_;
  Tensor mask_w_, mask_b_, var_w_, var_b_;
};

}  // namespace senh::nn
