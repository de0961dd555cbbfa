#include "senh/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "senh/common.hpp"

namespace senh::dsp {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

void validate(const Waveform& w) {
  if (w.samples.empty()) throw std::invalid_argument("waveform: empty");
  if (w.sample_rate <= 0)
    throw std::invalid_argument("waveform: sample_rate must be positive");
  if (!all_finite(w.samples))
    throw std::invalid_argument("waveform: non-finite sample");
}

StftConfig StftConfig::hann(std::size_t window_len, std::size_t fft_size) {
  StftConfig cfg;
  cfg.window_len = window_len;
  cfg.hop = window_len / 2;
  cfg.fft_size = fft_size == 0 ? window_len : fft_size;
  cfg.window.resize(window_len);
  for (std::size_t n = 0; n < window_len; ++n)
    cfg.window[n] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(n) /
                              double(window_len)));
  return cfg;
}

void StftConfig::validate() const {
  if (window_len == 0 || window_len % 2 != 0)
    throw std::invalid_argument("stft config: window_len must be even");
  if (hop != window_len / 2)
    throw std::invalid_argument("stft config: hop must equal window_len/2");
  if (fft_size < window_len)
    throw std::invalid_argument("stft config: fft_size < window_len");
  if (!is_pow2(fft_size))
    throw std::invalid_argument("stft config: fft_size must be a power of 2");
  if (window.size() != window_len)
    throw std::invalid_argument("stft config: window length mismatch");
  for (std::size_t n = 0; n < window_len; ++n) {
    const double hann =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(n) /
                              double(window_len)));
    if (std::abs(window[n] - hann) > 1e-12)
      throw std::invalid_argument("stft config: window is not periodic Hann");
  }
}

std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg) {
  const std::size_t padded = n_samples + cfg.hop;
  return (padded + cfg.hop - 1) / cfg.hop;
}

namespace detail {

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft: size must be power of 2");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang =
        (inverse ? 2.0 : -2.0) * std::numbers::pi / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x,
                                       std::size_t fft_size) {
  std::vector<std::complex<double>> a(fft_size, {0.0, 0.0});
  const std::size_t n = std::min(x.size(), fft_size);
  for (std::size_t i = 0; i < n; ++i) a[i] = {x[i], 0.0};
  fft_inplace(a, false);
  a.resize(fft_size / 2 + 1);
  return a;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& bins,
                          std::size_t fft_size) {
  const std::size_t f = fft_size / 2 + 1;
  if (bins.size() != f) throw std::invalid_argument("irfft: bin count");
  std::vector<std::complex<double>> a(fft_size);
  a[0] = {bins[0].real(), 0.0};
  a[fft_size / 2] = {bins[f - 1].real(), 0.0};
  for (std::size_t k = 1; k < f - 1; ++k) {
    a[k] = bins[k];
    a[fft_size - k] = std::conj(bins[k]);
  }
  fft_inplace(a, true);
  std::vector<double> out(fft_size);
  for (std::size_t i = 0; i < fft_size; ++i) out[i] = a[i].real();
  return out;
}

std::vector<double> window_sq_envelope(const StftConfig& cfg,
                                       std::size_t frames) {
  std::vector<double> env((frames - 1) * cfg.hop + cfg.window_len, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t n = 0; n < cfg.window_len; ++n)
      env[t * cfg.hop + n] += cfg.window[n] * cfg.window[n];
  return env;
}

}  // namespace detail

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate(w);
  cfg.validate();

  const std::size_t n = w.samples.size();
  const std::size_t pre = cfg.hop;
  const std::size_t frames = frame_count(n, cfg);
  const std::size_t buf_len = (frames - 1) * cfg.hop + cfg.window_len;

  std::vector<double> padded(buf_len, 0.0);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + long(pre));

  ComplexSpectrogram spec;
  spec.config = cfg;
  spec.source_len = n;
  spec.data = MatC(cfg.bins(), frames);

  std::vector<double> frame(cfg.window_len);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < cfg.window_len; ++i)
      frame[i] = padded[t * cfg.hop + i] * cfg.window[i];
    auto bins = detail::rfft(frame, cfg.fft_size);
    for (std::size_t f = 0; f < bins.size(); ++f) spec.data(f, t) = bins[f];
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, int sample_rate) {
  spec.config.validate();
  const StftConfig& cfg = spec.config;
  if (spec.data.rows() != cfg.bins())
    throw std::invalid_argument("istft: spectrogram rows do not match config");
  if (spec.data.cols() == 0)
    throw std::invalid_argument("istft: no frames");
  const std::size_t frames = spec.data.cols();
  const std::size_t buf_len = (frames - 1) * cfg.hop + cfg.window_len;

  std::vector<double> acc(buf_len, 0.0);
  std::vector<std::complex<double>> bins(cfg.bins());
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < cfg.bins(); ++f) bins[f] = spec.data(f, t);
    auto frame = detail::irfft(bins, cfg.fft_size);
    for (std::size_t n = 0; n < cfg.window_len; ++n)
      acc[t * cfg.hop + n] += frame[n] * cfg.window[n];
  }

  const auto env = detail::window_sq_envelope(cfg, frames);
  const std::size_t pre = cfg.hop;
  std::size_t out_len = spec.source_len;
  if (out_len == 0) out_len = buf_len > pre ? buf_len - pre : 0;

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(out_len, 0.0);
  for (std::size_t m = 0; m < out_len; ++m) {
    const std::size_t idx = m + pre;
    if (idx < buf_len && env[idx] > 1e-12)
      out.samples[m] = acc[idx] / env[idx];
  }
  return out;
}

MatF magnitude(const ComplexSpectrogram& spec) {
  MatF out(spec.data.rows(), spec.data.cols());
  for (std::size_t i = 0; i < spec.data.size(); ++i)
    out.data()[i] = std::abs(spec.data.data()[i]);
  return out;
}

MatF phase(const ComplexSpectrogram& spec) {
  MatF out(spec.data.rows(), spec.data.cols());
  for (std::size_t i = 0; i < spec.data.size(); ++i)
    out.data()[i] = std::arg(spec.data.data()[i]);
  return out;
}

ComplexSpectrogram recombine(const MatF& mag, const MatF& ph,
                             const StftConfig& cfg, std::size_t source_len) {
  require_same_shape("recombine", mag, ph);
  ComplexSpectrogram spec;
  spec.config = cfg;
  spec.source_len = source_len;
  spec.data = MatC(mag.rows(), mag.cols());
  for (std::size_t i = 0; i < mag.size(); ++i)
    spec.data.data()[i] =
        std::polar(mag.data()[i], ph.data()[i]);
  return spec;
}

namespace detail {

MatC istft_adjoint(const std::vector<double>& grad_waveform,
                   const StftConfig& cfg, std::size_t frames,
                   std::size_t source_len) {
  // istft is Trim . EnvDiv . OLA . (per frame: irfft then window).
  // Walk the chain backwards.
  const std::size_t buf_len = (frames - 1) * cfg.hop + cfg.window_len;
  const std::size_t pre = cfg.hop;
  const auto env = window_sq_envelope(cfg, frames);

  std::vector<double> g_buf(buf_len, 0.0);
  const std::size_t n = std::min(grad_waveform.size(), source_len);
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t idx = m + pre;
    if (idx < buf_len && env[idx] > 1e-12)
      g_buf[idx] = grad_waveform[m] / env[idx];
  }

  MatC grad(cfg.bins(), frames);
  std::vector<double> g_frame(cfg.fft_size, 0.0);
  const std::size_t f_count = cfg.bins();
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(g_frame.begin(), g_frame.end(), 0.0);
    for (std::size_t i = 0; i < cfg.window_len; ++i)
      g_frame[i] = g_buf[t * cfg.hop + i] * cfg.window[i];
    // adjoint of irfft: forward rfft with per-bin weights
    // {1, 2, ..., 2, 1} / fft_size; DC and Nyquist imag grads are zero.
    auto bins = rfft(g_frame, cfg.fft_size);
    const double inv = 1.0 / double(cfg.fft_size);
    for (std::size_t f = 0; f < f_count; ++f) {
      const bool edge = (f == 0 || f == f_count - 1);
      const double scale = (edge ? 1.0 : 2.0) * inv;
      const std::complex<double> b = bins[f];
      grad(f, t) = edge ? std::complex<double>(b.real() * scale, 0.0)
                        : std::complex<double>(b.real() * scale,
                                               b.imag() * scale);
    }
  }
  return grad;
}

}  // namespace detail

}  // namespace senh::dsp
