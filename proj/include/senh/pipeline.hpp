// Waveform-in / waveform-out enhancement: analysis, mask inference,
// spectral gain, synthesis with the noisy phase.
#pragma once

#include <string>

#include "senh/dsp.hpp"
#include "senh/nn/network.hpp"
#include "senh/stat_model.hpp"

namespace senh::pipeline {

enum class Estimator { kWienerFilter, kAmap };

Estimator estimator_from_string(const std::string& s);
const char* to_string(Estimator e);

// Analysis window implied by the network's bin count (fft = 2(F-1)).
dsp::StftConfig stft_config_for(const nn::NetworkConfig& cfg);

struct EnhanceResult {
  dsp::Waveform enhanced;           // clamped to [-1, 1]
  stat::MaskPair mask;              // network outputs
  MatF gain;                        // spectral gain actually applied
  dsp::ComplexSpectrogram noisy_spec;
};

EnhanceResult enhance(const dsp::Waveform& noisy, const nn::MaskNet& net,
                      Estimator estimator);

}  // namespace senh::pipeline
