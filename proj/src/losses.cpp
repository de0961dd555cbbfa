#include "senh/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "senh/common.hpp"

namespace senh::losses {

namespace {

constexpr double kTenOverLn10 = 4.342944819032518;  // 10 / ln 10

void require_spec_shapes(const dsp::ComplexSpectrogram& x,
                         const dsp::ComplexSpectrogram& s) {
  require_same_shape("loss", x.data, s.data);
}

std::vector<double> real_part(const MatC& m) {
  std::vector<double> v(m.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.data()[i].real();
  return v;
}

std::vector<double> imag_part(const MatC& m) {
  std::vector<double> v(m.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.data()[i].imag();
  return v;
}

}  // namespace

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "logpost") return LossKind::kLogPosterior;
  if (s == "sisdr") return LossKind::kSiSdr;
  if (s == "hybrid") return LossKind::kHybrid;
  throw std::invalid_argument("unknown loss kind: " + s);
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kMse: return "mse";
    case LossKind::kLogPosterior: return "logpost";
    case LossKind::kSiSdr: return "sisdr";
    case LossKind::kHybrid: return "hybrid";
  }
  return "?";
}

void LossConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("loss config: beta must be in [0,1]");
  if (!(lambda_floor > 0.0) || !(sisdr_eps > 0.0))
    throw std::invalid_argument("loss config: floors must be positive");
}

namespace detail {

SiSdrRatio si_sdr_ratio(const std::vector<double>& s_hat,
                        const std::vector<double>& s) {
  if (s_hat.size() != s.size())
    throw std::invalid_argument("si_sdr: length mismatch");
  if (s.empty()) throw std::invalid_argument("si_sdr: empty signals");

  std::vector<double> tmp(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) tmp[i] = s[i] * s[i];
  const double s_energy = pairwise_sum(tmp);
  if (s_energy <= 0.0)
    throw std::invalid_argument("si_sdr: zero-energy reference");

  for (std::size_t i = 0; i < s.size(); ++i) tmp[i] = s_hat[i] * s[i];
  const double alpha = pairwise_sum(tmp) / s_energy;

  SiSdrRatio r;
  r.scaled_target_energy = alpha * alpha * s_energy;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = alpha * s[i] - s_hat[i];
    tmp[i] = e * e;
  }
  r.residual_energy = pairwise_sum(tmp);
  return r;
}

std::vector<double> residual_sq(const MatF& wiener,
                                const dsp::ComplexSpectrogram& x,
                                const dsp::ComplexSpectrogram& s) {
  require_same_shape("loss", wiener, x.data);
  std::vector<double> r2(wiener.size());
  for (std::size_t i = 0; i < r2.size(); ++i) {
    const std::complex<double> diff =
        s.data.data()[i] - wiener.data()[i] * x.data.data()[i];
    r2[i] = std::norm(diff);
  }
  return r2;
}

}  // namespace detail

// ---- plain scalar evaluation ----

double loss_mse(const stat::MaskPair& m, const dsp::ComplexSpectrogram& x,
                const dsp::ComplexSpectrogram& s) {
  require_spec_shapes(x, s);
  const auto r2 = detail::residual_sq(m.wiener, x, s);
  return pairwise_sum(r2) / double(r2.size());
}

double loss_log_posterior(const stat::MaskPair& m,
                          const dsp::ComplexSpectrogram& x,
                          const dsp::ComplexSpectrogram& s,
                          const LossConfig& cfg) {
  cfg.validate();
  require_spec_shapes(x, s);
  require_same_shape("loss", m.wiener, m.log_var);
  const auto r2 = detail::residual_sq(m.wiener, x, s);
  const double lv_floor = std::log(cfg.lambda_floor);
  std::vector<double> terms(r2.size());
  for (std::size_t i = 0; i < r2.size(); ++i) {
    const double lv = std::max(m.log_var.data()[i], lv_floor);
    terms[i] = lv + r2[i] * std::exp(-lv);
  }
  return pairwise_sum(terms) / double(terms.size());
}

double loss_si_sdr(const dsp::Waveform& s_hat, const dsp::Waveform& s,
                   const LossConfig& cfg) {
  cfg.validate();
  const auto r = detail::si_sdr_ratio(s_hat.samples, s.samples);
  return -kTenOverLn10 * (std::log(r.scaled_target_energy) -
                          std::log(r.residual_energy + cfg.sisdr_eps));
}

double loss_hybrid(const stat::MaskPair& m, const dsp::ComplexSpectrogram& x,
                   const dsp::ComplexSpectrogram& s, const dsp::Waveform& s_ref,
                   const LossConfig& cfg) {
  cfg.validate();
  const double lp = loss_log_posterior(m, x, s, cfg);

  const auto x_mag = dsp::magnitude(x);
  const auto gain = stat::amap_gain(m, x_mag);
  MatF est_mag(x_mag.rows(), x_mag.cols());
  for (std::size_t i = 0; i < est_mag.size(); ++i)
    est_mag.data()[i] = gain.data()[i] * x_mag.data()[i];
  const auto est =
      dsp::istft(dsp::recombine(est_mag, dsp::phase(x), x.config,
                                x.source_len),
                 s_ref.sample_rate);
  const double sisdr = loss_si_sdr(est, s_ref, cfg);

  return cfg.beta * lp + (1.0 - cfg.beta) * sisdr;
}

// ---- tensor-graph builders ----

namespace {

// r^2 as a graph: (Re S - W Re X)^2 + (Im S - W Im X)^2
nn::Tensor residual_sq_graph(const nn::Tensor& wiener,
                             const dsp::ComplexSpectrogram& x,
                             const dsp::ComplexSpectrogram& s) {
  require_spec_shapes(x, s);
  if (wiener.shape() !=
      std::vector<std::size_t>{x.data.rows(), x.data.cols()})
    throw std::invalid_argument("loss graph: mask/spectrogram shape mismatch");
  auto dr = nn::const_sub(real_part(s.data), nn::mul_const(wiener, real_part(x.data)));
  auto di = nn::const_sub(imag_part(s.data), nn::mul_const(wiener, imag_part(x.data)));
  return nn::add(nn::square(dr), nn::square(di));
}

}  // namespace

nn::Tensor mse_graph(const nn::Tensor& wiener,
                     const dsp::ComplexSpectrogram& x,
                     const dsp::ComplexSpectrogram& s) {
  return nn::mean(residual_sq_graph(wiener, x, s));
}

nn::Tensor log_posterior_graph(const nn::Tensor& wiener,
                               const nn::Tensor& log_var,
                               const dsp::ComplexSpectrogram& x,
                               const dsp::ComplexSpectrogram& s,
                               const LossConfig& cfg) {
  cfg.validate();
  auto r2 = residual_sq_graph(wiener, x, s);
  auto lv = nn::clamp_min(log_var, std::log(cfg.lambda_floor));
  auto inv_lambda = nn::exp(nn::scale(lv, -1.0));
  return nn::mean(nn::add(lv, nn::mul(r2, inv_lambda)));
}

namespace {

// Synthesize a magnitude tensor with the noisy phase; the backward pass
// applies the istft adjoint and projects onto the phase direction.
nn::Tensor synth_with_phase_graph(const nn::Tensor& est_mag,
                                  const dsp::ComplexSpectrogram& x) {
  if (x.source_len == 0)
    throw std::invalid_argument("loss graph: spectrogram lacks source_len");
  const auto ph = dsp::phase(x);
  const auto cfg = x.config;
  const std::size_t frames = x.frames();
  const std::size_t out_len = x.source_len;

  dsp::ComplexSpectrogram est;
  est.config = cfg;
  est.source_len = out_len;
  est.data = MatC(x.data.rows(), x.data.cols());
  for (std::size_t i = 0; i < est.data.size(); ++i)
    est.data.data()[i] = std::polar(est_mag.values()[i], ph.data()[i]);
  auto wav = dsp::istft(est);

  return nn::make_op(
      {out_len}, std::move(wav.samples), {est_mag},
      [ph, cfg, frames, out_len](nn::detail::Node& n) {
        auto& pm = *n.parents[0];
        pm.ensure_grad();
        const auto gx = dsp::detail::istft_adjoint(n.grad, cfg, frames, out_len);
        for (std::size_t i = 0; i < pm.size(); ++i) {
          const double phi = ph.data()[i];
          pm.grad[i] += std::cos(phi) * gx.data()[i].real() +
                        std::sin(phi) * gx.data()[i].imag();
        }
      });
}

}  // namespace

nn::Tensor amap_waveform_graph(const nn::Tensor& wiener,
                               const nn::Tensor& log_var,
                               const dsp::ComplexSpectrogram& x) {
  const auto mag = dsp::magnitude(x);
  std::vector<double> inv_4m2(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    const double m = std::max(mag.data()[i], kMagnitudeFloor);
    inv_4m2[i] = 1.0 / (4.0 * m * m);
  }
  auto half_w = nn::scale(wiener, 0.5);
  auto lambda = nn::exp(log_var);
  auto gain = nn::add(half_w, nn::sqrt(nn::add(nn::square(half_w),
                                               nn::mul_const(lambda, inv_4m2))));
  return synth_with_phase_graph(nn::mul_const(gain, mag.data()), x);
}

nn::Tensor wiener_waveform_graph(const nn::Tensor& wiener,
                                 const dsp::ComplexSpectrogram& x) {
  const auto mag = dsp::magnitude(x);
  return synth_with_phase_graph(nn::mul_const(wiener, mag.data()), x);
}

nn::Tensor si_sdr_graph(const nn::Tensor& s_hat, const std::vector<double>& s,
                        const LossConfig& cfg) {
  cfg.validate();
  if (s_hat.size() != s.size())
    throw std::invalid_argument("si_sdr graph: length mismatch");
  std::vector<double> sq(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) sq[i] = s[i] * s[i];
  const double s_energy = pairwise_sum(sq);
  if (s_energy <= 0.0)
    throw std::invalid_argument("si_sdr graph: zero-energy reference");

  auto alpha = nn::scale(nn::dot_const(s_hat, s), 1.0 / s_energy);
  auto num = nn::scale(nn::square(alpha), s_energy);
  auto resid = nn::sub(nn::scalar_mul_const(alpha, s), s_hat);
  auto den = nn::add_scalar(nn::sum(nn::square(resid)), cfg.sisdr_eps);
  return nn::scale(nn::sub(nn::log(num), nn::log(den)), -kTenOverLn10);
}

nn::Tensor hybrid_graph(const nn::Tensor& wiener, const nn::Tensor& log_var,
                        const dsp::ComplexSpectrogram& x,
                        const dsp::ComplexSpectrogram& s,
                        const std::vector<double>& s_ref,
                        const LossConfig& cfg) {
  cfg.validate();
  auto lp = log_posterior_graph(wiener, log_var, x, s, cfg);
  auto est = amap_waveform_graph(wiener, log_var, x);
  auto sisdr = si_sdr_graph(est, s_ref, cfg);
  return nn::add(nn::scale(lp, cfg.beta), nn::scale(sisdr, 1.0 - cfg.beta));
}

nn::Tensor loss_graph(const nn::Tensor& wiener, const nn::Tensor& log_var,
                      const dsp::ComplexSpectrogram& x,
                      const dsp::ComplexSpectrogram& s,
                      const std::vector<double>& s_ref, const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::kMse:
      return mse_graph(wiener, x, s);
    case LossKind::kLogPosterior:
      return log_posterior_graph(wiener, log_var, x, s, cfg);
    case LossKind::kSiSdr:
      // baseline semantics: mask-only reconstruction, no uncertainty
      return si_sdr_graph(wiener_waveform_graph(wiener, x), s_ref, cfg);
    case LossKind::kHybrid:
      return hybrid_graph(wiener, log_var, x, s, s_ref, cfg);
  }
  throw std::logic_error("loss_graph: bad kind");
}

}  // namespace senh::losses
