// Closed-form Gaussian statistical model per time-frequency bin:
// Wiener filter, posterior variance, the Rician magnitude posterior,
// and the approximate-MAP magnitude gain. Serves both as an oracle
// (known variances) and as the consumer of network-estimated masks.
#pragma once

#include <cstddef>
#include <cstdint>

#include "senh/dsp.hpp"
#include "senh/mat.hpp"

namespace senh::stat {

struct VariancePair {
  MatF sigma2_s;  // speech PSD, power units, element-wise >= 0
  MatF sigma2_n;  // noise PSD

  void validate() const;
};

// Per-bin complex Gaussian posterior of clean speech given the noisy
// coefficient: mean = W * X, variance >= 0.
struct GaussianPosterior {
  MatC mean;
  MatF variance;
};

// Network-facing mask representation: Wiener gain in [0,1] and the log
// of the posterior variance.
struct MaskPair {
  MatF wiener;
  MatF log_var;
};

// W = s/(s+n), lambda = W*n, with both variances floored at
// kVarianceFloor so W stays in (0,1) and lambda stays positive.
// Throws on negative input.
MaskPair wiener_from_variances(const VariancePair& v);

GaussianPosterior apply_mask(const dsp::ComplexSpectrogram& x,
                             const MaskPair& m);

struct AmapStats {
  std::size_t floored_magnitudes = 0;  // bins where |X| hit the floor
};

// Approximate-MAP magnitude gain:
//   g = W/2 + sqrt((W/2)^2 + lambda / (4 |X|^2)),
// lambda recovered as exp(log_var), |X| floored at kMagnitudeFloor.
// Deliberately not clamped to [0,1]; the gain exceeds 1 when the
// uncertainty is large, and output samples are only clamped at the
// final waveform stage.
MatF amap_gain(const MaskPair& m, const MatF& x_mag,
               AmapStats* stats = nullptr);

// Rician posterior density of the clean magnitude given the noisy one,
// evaluated in the log domain to survive large Bessel arguments.
// Throws if lambda <= 0.
double rician_pdf(double s_mag, double wiener, double lambda, double x_mag);

struct MmseReport {
  double empirical_mse = 0.0;
  double mean_lambda = 0.0;
};

// Monte-Carlo check that the Wiener estimate's squared error matches
// the posterior variance. Draws speech and noise from their priors
// (un-floored, so zero speech variance gives exactly zero error),
// applies the oracle Wiener filter and reports the empirical MSE next
// to the analytic mean lambda.
MmseReport verify_mmse_error(const VariancePair& v, std::size_t n_draws,
                             std::uint64_t seed);

namespace detail {

// log I0 with series / asymptotic split at z = 20; ~1e-8 relative.
double log_bessel_i0(double z);

}  // namespace detail

}  // namespace senh::stat
