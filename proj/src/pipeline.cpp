#include "senh/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "senh/common.hpp"
#include "senh/nn/tensor.hpp"

namespace senh::pipeline {

Estimator estimator_from_string(const std::string& s) {
  if (s == "wf") return Estimator::kWienerFilter;
  if (s == "amap") return Estimator::kAmap;
  throw std::invalid_argument("unknown estimator: " + s + " (want wf|amap)");
}

const char* to_string(Estimator e) {
  return e == Estimator::kWienerFilter ? "wf" : "amap";
}

dsp::StftConfig stft_config_for(const nn::NetworkConfig& cfg) {
  if (cfg.n_freq < 2)
    throw std::invalid_argument("stft_config_for: n_freq too small");
  const std::size_t fft = 2 * (cfg.n_freq - 1);
  return dsp::StftConfig::hann(fft, fft);
}

EnhanceResult enhance(const dsp::Waveform& noisy, const nn::MaskNet& net,
                      Estimator estimator) {
  const auto scfg = stft_config_for(net.config());

  EnhanceResult result;
  result.noisy_spec = dsp::stft(noisy, scfg);

  nn::NoGradGuard no_grad;
  const auto out = net.forward(
      nn::features_tensor(nn::make_features(result.noisy_spec)));

  const std::size_t f = result.noisy_spec.bins();
  const std::size_t t = result.noisy_spec.frames();
  result.mask.wiener = MatF(f, t);
  result.mask.log_var = MatF(f, t);
  result.mask.wiener.data() = out.wiener.values();
  result.mask.log_var.data() = out.log_var.values();

  const auto x_mag = dsp::magnitude(result.noisy_spec);
  result.gain = estimator == Estimator::kWienerFilter
                    ? result.mask.wiener
                    : stat::amap_gain(result.mask, x_mag);

  MatF est_mag(f, t);
  for (std::size_t i = 0; i < est_mag.size(); ++i)
    est_mag.data()[i] = result.gain.data()[i] * x_mag.data()[i];

  result.enhanced =
      dsp::istft(dsp::recombine(est_mag, dsp::phase(result.noisy_spec), scfg,
                                result.noisy_spec.source_len),
                 noisy.sample_rate);
  for (double& v : result.enhanced.samples) v = std::clamp(v, -1.0, 1.0);
  return result;
}

}  // namespace senh::pipeline
