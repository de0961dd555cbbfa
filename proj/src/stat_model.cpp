#include "senh/stat_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "senh/common.hpp"

namespace senh::stat {

void VariancePair::validate() const {
  require_same_shape("variance pair", sigma2_s, sigma2_n);
  if (sigma2_s.empty()) throw std::invalid_argument("variance pair: empty");
  for (std::size_t i = 0; i < sigma2_s.size(); ++i) {
    const double s = sigma2_s.data()[i], n = sigma2_n.data()[i];
    if (!(s >= 0.0) || !(n >= 0.0))
      throw std::invalid_argument("variance pair: negative or NaN variance");
    if (s == 0.0 && n == 0.0)
      throw std::invalid_argument("variance pair: both variances zero");
  }
}

MaskPair wiener_from_variances(const VariancePair& v) {
  v.validate();
  MaskPair m;
  m.wiener = MatF(v.sigma2_s.rows(), v.sigma2_s.cols());
  m.log_var = MatF(v.sigma2_s.rows(), v.sigma2_s.cols());
  for (std::size_t i = 0; i < v.sigma2_s.size(); ++i) {
    const double s = std::max(v.sigma2_s.data()[i], kVarianceFloor);
    const double n = std::max(v.sigma2_n.data()[i], kVarianceFloor);
    const double w = s / (s + n);
    m.wiener.data()[i] = w;
    m.log_var.data()[i] = std::log(w * n);  // lambda = W * sigma2_n exactly
  }
  return m;
}

GaussianPosterior apply_mask(const dsp::ComplexSpectrogram& x,
                             const MaskPair& m) {
  require_same_shape("apply_mask", x.data, m.wiener);
  require_same_shape("apply_mask", m.wiener, m.log_var);
  GaussianPosterior post;
  post.mean = MatC(x.data.rows(), x.data.cols());
  post.variance = MatF(x.data.rows(), x.data.cols());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    post.mean.data()[i] = m.wiener.data()[i] * x.data.data()[i];
    post.variance.data()[i] = std::exp(m.log_var.data()[i]);
  }
  return post;
}

MatF amap_gain(const MaskPair& m, const MatF& x_mag, AmapStats* stats) {
  require_same_shape("amap_gain", m.wiener, x_mag);
  require_same_shape("amap_gain", m.wiener, m.log_var);
  MatF gain(x_mag.rows(), x_mag.cols());
  std::size_t floored = 0;
  for (std::size_t i = 0; i < x_mag.size(); ++i) {
    double mag = x_mag.data()[i];
    if (mag < kMagnitudeFloor) {
      mag = kMagnitudeFloor;
      ++floored;
    }
    const double w = m.wiener.data()[i];
    const double lambda = std::exp(m.log_var.data()[i]);
    const double half_w = 0.5 * w;
    gain.data()[i] =
        half_w + std::sqrt(half_w * half_w + lambda / (4.0 * mag * mag));
  }
  if (stats) stats->floored_magnitudes = floored;
  return gain;
}

namespace detail {

double log_bessel_i0(double z) {
  z = std::fabs(z);
  if (z < 20.0) {
    // all-positive power series, no cancellation
    const double a = z * z / 4.0;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 200; ++k) {
      term *= a / (double(k) * double(k));
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return std::log(sum);
  }
  // I0(z) ~ e^z / sqrt(2 pi z) * (1 + 1/(8z) + 9/(128 z^2) + ...)
  const double zi = 1.0 / z;
  const double corr =
      1.0 + zi * (0.125 +
                  zi * (0.0703125 +
                        zi * (0.0732421875 + zi * 0.112152099609375)));
  return z - 0.5 * std::log(2.0 * std::numbers::pi * z) + std::log(corr);
}

}  // namespace detail

double rician_pdf(double s_mag, double wiener, double lambda, double x_mag) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("rician_pdf: lambda must be positive");
  if (s_mag < 0.0) throw std::invalid_argument("rician_pdf: negative s_mag");
  if (s_mag == 0.0) return 0.0;
  const double nu = wiener * x_mag;
  const double log_pdf = std::log(2.0 * s_mag / lambda) -
                         (s_mag * s_mag + nu * nu) / lambda +
                         detail::log_bessel_i0(2.0 * s_mag * nu / lambda);
  return std::exp(log_pdf);
}

MmseReport verify_mmse_error(const VariancePair& v, std::size_t n_draws,
                             std::uint64_t seed) {
  v.validate();
  if (n_draws < 10000)
    throw std::invalid_argument(
        "verify_mmse_error: need at least 1e4 draws per bin");
  Rng rng(seed);
  const std::size_t bins = v.sigma2_s.size();

  std::vector<double> lambdas(bins);
  double err_acc = 0.0;
  for (std::size_t i = 0; i < bins; ++i) {
    const double s2 = v.sigma2_s.data()[i];
    const double n2 = v.sigma2_n.data()[i];
    const double w = s2 / (s2 + n2);  // un-floored oracle
    lambdas[i] = w * n2;

    Rng bin_rng = rng.derive(i);
    const double s_dev = std::sqrt(0.5 * s2);
    const double n_dev = std::sqrt(0.5 * n2);
    std::vector<double> errs(n_draws);
    for (std::size_t d = 0; d < n_draws; ++d) {
      const std::complex<double> s(s_dev * bin_rng.gaussian(),
                                   s_dev * bin_rng.gaussian());
      const std::complex<double> n(n_dev * bin_rng.gaussian(),
                                   n_dev * bin_rng.gaussian());
      const std::complex<double> est = w * (s + n);
      errs[d] = std::norm(s - est);
    }
    err_acc += pairwise_sum(errs) / double(n_draws);
  }

  MmseReport report;
  report.empirical_mse = err_acc / double(bins);
  report.mean_lambda = pairwise_sum(lambdas) / double(bins);
  return report;
}

}  // namespace senh::stat
