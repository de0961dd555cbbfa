// STFT analysis/synthesis and spectrogram containers.
//
// Conventions fixed here and relied on everywhere downstream:
//   - periodic Hann analysis window, 50% overlap (hop = window_len/2)
//   - one-sided spectra, F = fft_size/2 + 1 bins
//   - signal pre-padded by one hop and post-padded to fill the last
//     frame; synthesis trims back to the original length
//   - weighted overlap-add synthesis: the analysis window is applied
//     again on synthesis and the result is normalized by the summed
//     squared-window envelope, which is exact COLA at 50% overlap
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "senh/mat.hpp"

namespace senh::dsp {

struct Waveform {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = 16000;      // Hz

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return double(samples.size()) / double(sample_rate);
  }
};

// Throws std::invalid_argument if the waveform is empty, has a
// non-positive rate, or contains non-finite samples.
void validate(const Waveform& w);

struct StftConfig {
  std::size_t window_len = 512;
  std::size_t hop = 256;
  std::size_t fft_size = 512;
  std::vector<double> window;  // analysis taps, length window_len

  // 32 ms at 16 kHz with 50% overlap by default.
  static StftConfig hann(std::size_t window_len = 512,
                         std::size_t fft_size = 0);

  std::size_t bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

struct ComplexSpectrogram {
  MatC data;          // F x T
  StftConfig config;
  std::size_t source_len = 0;  // original sample count, for istft trimming

  std::size_t bins() const { return data.rows(); }
  std::size_t frames() const { return data.cols(); }
};

// Number of frames produced for a waveform of n samples: the signal is
// pre-padded by one hop, so T = ceil((n + hop) / hop).
std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg);

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);
Waveform istft(const ComplexSpectrogram& spec, int sample_rate = 16000);

MatF magnitude(const ComplexSpectrogram& spec);
MatF phase(const ComplexSpectrogram& spec);

// Polar recombination; mag and ph must share shape. Carries cfg and
// source_len through so the result is istft-able.
ComplexSpectrogram recombine(const MatF& mag, const MatF& ph,
                             const StftConfig& cfg, std::size_t source_len);

namespace detail {

// Radix-2 complex FFT, in place. Size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// One-sided transforms of real frames. irfft ignores the imaginary
// parts of the DC and Nyquist bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x,
                                       std::size_t fft_size);
std::vector<double> irfft(const std::vector<std::complex<double>>& bins,
                          std::size_t fft_size);

// Adjoint of the linear map (one-sided spectrogram -> istft waveform)
// at fixed shape. Given d(scalar)/d(waveform sample), returns
// d(scalar)/d(Re, Im of each bin) packed as a complex matrix. Used by
// the training graph to differentiate through synthesis.
MatC istft_adjoint(const std::vector<double>& grad_waveform,
                   const StftConfig& cfg, std::size_t frames,
                   std::size_t source_len);

// Squared-window overlap envelope over the padded synthesis buffer.
std::vector<double> window_sq_envelope(const StftConfig& cfg,
                                       std::size_t frames);

}  // namespace detail

}  // namespace senh::dsp
