// Training objectives: MSE, negative log-posterior, negative SI-SDR,
// and the hybrid combination. Each exists twice: as a plain scalar
// evaluation (pairwise-summed, used by tests and evaluation) and as a
// tensor-graph builder used by the training loop, where gradients flow
// through the A-MAP magnitude estimate and synthesis back to the mask
// and log-variance heads.
#pragma once

#include <vector>

#include "senh/dsp.hpp"
#include "senh/nn/tensor.hpp"
#include "senh/stat_model.hpp"

namespace senh::losses {

enum class LossKind { kMse, kLogPosterior, kSiSdr, kHybrid };

LossKind loss_kind_from_string(const std::string& s);
const char* to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::kHybrid;
  double beta = 0.01;          // hybrid weight on the log-posterior term
  double lambda_floor = 1e-8;  // floor inside the log-posterior's log and division
  double sisdr_eps = 1e-8;     // added to the SI-SDR denominator energy

  void validate() const;
};

// ---- plain scalar evaluation ----

double loss_mse(const stat::MaskPair& m, const dsp::ComplexSpectrogram& x,
                const dsp::ComplexSpectrogram& s);

double loss_log_posterior(const stat::MaskPair& m,
                          const dsp::ComplexSpectrogram& x,
                          const dsp::ComplexSpectrogram& s,
                          const LossConfig& cfg);

double loss_si_sdr(const dsp::Waveform& s_hat, const dsp::Waveform& s,
                   const LossConfig& cfg);

// SI-SDR term computed on the A-MAP reconstruction with noisy phase.
double loss_hybrid(const stat::MaskPair& m, const dsp::ComplexSpectrogram& x,
                   const dsp::ComplexSpectrogram& s, const dsp::Waveform& s_ref,
                   const LossConfig& cfg);

// ---- tensor-graph builders ----
// wiener / log_var are [F, T] tensors matching the spectrogram shapes.

nn::Tensor mse_graph(const nn::Tensor& wiener,
                     const dsp::ComplexSpectrogram& x,
                     const dsp::ComplexSpectrogram& s);

nn::Tensor log_posterior_graph(const nn::Tensor& wiener,
                               const nn::Tensor& log_var,
                               const dsp::ComplexSpectrogram& x,
                               const dsp::ComplexSpectrogram& s,
                               const LossConfig& cfg);

// A-MAP magnitude combined with the noisy phase and synthesized to a
// waveform tensor of length x.source_len.
nn::Tensor amap_waveform_graph(const nn::Tensor& wiener,
                               const nn::Tensor& log_var,
                               const dsp::ComplexSpectrogram& x);

// Mask-only reconstruction W |X| with the noisy phase; used by the
// plain SI-SDR training baseline.
nn::Tensor wiener_waveform_graph(const nn::Tensor& wiener,
                                 const dsp::ComplexSpectrogram& x);

nn::Tensor si_sdr_graph(const nn::Tensor& s_hat, const std::vector<double>& s,
                        const LossConfig& cfg);

nn::Tensor hybrid_graph(const nn::Tensor& wiener, const nn::Tensor& log_var,
                        const dsp::ComplexSpectrogram& x,
                        const dsp::ComplexSpectrogram& s,
                        const std::vector<double>& s_ref,
                        const LossConfig& cfg);

// Dispatch on cfg.kind; s_ref is the clean waveform.
nn::Tensor loss_graph(const nn::Tensor& wiener, const nn::Tensor& log_var,
                      const dsp::ComplexSpectrogram& x,
                      const dsp::ComplexSpectrogram& s,
                      const std::vector<double>& s_ref, const LossConfig& cfg);

namespace detail {

struct SiSdrRatio {
  double scaled_target_energy = 0.0;  // ||alpha s||^2
  double residual_energy = 0.0;       // ||alpha s - s_hat||^2
};

// Shared between the loss and the evaluation metric.
SiSdrRatio si_sdr_ratio(const std::vector<double>& s_hat,
                        const std::vector<double>& s);

// |S - W X|^2 per bin, row-major; shared by MSE and log-posterior.
std::vector<double> residual_sq(const MatF& wiener,
                                const dsp::ComplexSpectrogram& x,
                                const dsp::ComplexSpectrogram& s);

}  // namespace detail

}  // namespace senh::losses
