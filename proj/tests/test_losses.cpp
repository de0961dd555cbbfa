#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "senh/common.hpp"
#include "senh/losses.hpp"

using namespace senh;
using losses::LossConfig;
using losses::LossKind;
using stat::MaskPair;

namespace {

dsp::Waveform random_waveform(std::size_t n, std::uint64_t seed,
                              double amp = 0.5) {
  Rng rng(seed);
  dsp::Waveform w;
  w.samples = oracle::random_signal(n, rng, amp);
  return w;
}

// Random test instance built through the real analysis path so the
// spectrograms are istft-able.
struct Instance {
  dsp::ComplexSpectrogram x, s;
  dsp::Waveform clean;
  MaskPair mask;
};

Instance random_instance(std::uint64_t seed, std::size_t n_samples = 400,
                         std::size_t window = 32) {
  Instance inst;
  auto cfg = dsp::StftConfig::hann(window);
  inst.clean = random_waveform(n_samples, seed);
  auto noise = random_waveform(n_samples, seed + 1, 0.3);
  dsp::Waveform mix;
  mix.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    mix.samples[i] = inst.clean.samples[i] + noise.samples[i];
  inst.x = dsp::stft(mix, cfg);
  inst.s = dsp::stft(inst.clean, cfg);
  Rng rng(seed + 2);
  inst.mask.wiener = MatF(inst.x.bins(), inst.x.frames());
  inst.mask.log_var = MatF(inst.x.bins(), inst.x.frames());
  for (auto& w : inst.mask.wiener.data()) w = rng.uniform(0.05, 0.95);
  for (auto& lv : inst.mask.log_var.data()) lv = rng.uniform(-4.0, 1.0);
  return inst;
}

// Direct single-bin spectrogram pair for hand-value checks.
Instance single_bin(std::complex<double> x, std::complex<double> s, double w,
                    double log_var) {
  Instance inst;
  inst.x.data = MatC(1, 1);
  inst.x.data(0, 0) = x;
  inst.s.data = MatC(1, 1);
  inst.s.data(0, 0) = s;
  inst.mask.wiener = MatF(1, 1, w);
  inst.mask.log_var = MatF(1, 1, log_var);
  return inst;
}

nn::Tensor mask_tensor(const MatF& m, bool requires_grad = true) {
  return nn::Tensor::from({m.rows(), m.cols()}, m.data(), requires_grad);
}

}  // namespace

TEST_CASE("mse: perfect estimate gives zero") {
  auto inst = random_instance(3);
  MaskPair ones{MatF(inst.x.bins(), inst.x.frames(), 1.0),
                MatF(inst.x.bins(), inst.x.frames(), 0.0)};
  CHECK(losses::loss_mse(ones, inst.x, inst.x) == 0.0);
}

TEST_CASE("mse: zero target gives mean masked power") {
  auto inst = random_instance(4);
  dsp::ComplexSpectrogram zero = inst.x;
  for (auto& v : zero.data.data()) v = 0.0;
  std::vector<double> pow(inst.x.data.size());
  for (std::size_t i = 0; i < pow.size(); ++i)
    pow[i] = std::norm(inst.mask.wiener.data()[i] * inst.x.data.data()[i]);
  const double want = pairwise_sum(pow) / double(pow.size());
  CHECK(losses::loss_mse(inst.mask, inst.x, zero) ==
        doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("mse matches brute-force double loop") {
  auto inst = random_instance(5);
  double acc = 0.0;  // naive order-dependent summation as the oracle
  for (std::size_t f = 0; f < inst.x.bins(); ++f)
    for (std::size_t t = 0; t < inst.x.frames(); ++t)
      acc += std::norm(inst.s.data(f, t) -
                       inst.mask.wiener(f, t) * inst.x.data(f, t));
  const double want = acc / double(inst.x.data.size());
  CHECK(losses::loss_mse(inst.mask, inst.x, inst.s) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("log-posterior with unit variance equals mse bit-for-bit") {
  auto inst = random_instance(6);
  MaskPair unit{inst.mask.wiener,
                MatF(inst.x.bins(), inst.x.frames(), 0.0)};
  LossConfig cfg;
  CHECK(losses::loss_log_posterior(unit, inst.x, inst.s, cfg) ==
        losses::loss_mse(unit, inst.x, inst.s));
}

TEST_CASE("log-posterior: single-bin hand value") {
  // |S - W X|^2 = 4 with lambda = 4: log 4 + 1
  auto inst = single_bin({2.0, 0.0}, {4.0, 0.0}, 1.0, std::log(4.0));
  LossConfig cfg;
  CHECK(losses::loss_log_posterior(inst.mask, inst.x, inst.s, cfg) ==
        doctest::Approx(std::log(4.0) + 1.0).epsilon(1e-14));
}

TEST_CASE("log-posterior: per-bin optimum over lambda is the residual") {
  auto inst = random_instance(7);
  LossConfig cfg;
  const auto r2 = losses::detail::residual_sq(inst.mask.wiener, inst.x, inst.s);
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t bin = rng.below(r2.size());
    const double r2b = std::max(r2[bin], 1e-12);
    // grid search in log space around the stationary point
    const double at_opt = std::log(r2b) + 1.0;
    for (double step : {-0.5, -0.1, -0.01, 0.01, 0.1, 0.5}) {
      const double lv = std::log(r2b) + step;
      const double val = lv + r2b * std::exp(-lv);
      CHECK(val >= at_opt - 1e-12);
    }
  }
}

TEST_CASE("log-posterior gradient w.r.t. log_var vanishes at lambda = r^2") {
  auto inst = random_instance(8, 200, 16);
  LossConfig cfg;
  const auto r2 = losses::detail::residual_sq(inst.mask.wiener, inst.x, inst.s);
  MatF lv_opt(inst.x.bins(), inst.x.frames());
  for (std::size_t i = 0; i < r2.size(); ++i)
    lv_opt.data()[i] = std::log(std::max(r2[i], 1e-12));

  auto wiener = mask_tensor(inst.mask.wiener, false);
  auto log_var = mask_tensor(lv_opt, true);
  auto loss = losses::log_posterior_graph(wiener, log_var, inst.x, inst.s, cfg);
  loss.backward();
  for (double g : log_var.grad()) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("si-sdr: hand value") {
  dsp::Waveform s, s_hat;
  s.samples = {1.0, 1.0};
  s_hat.samples = {1.0, 0.0};
  LossConfig cfg;
  // exact 0 dB up to the denominator eps; the eps-free metric in
  // metrics::si_sdr_db hits it exactly
  CHECK(std::abs(losses::loss_si_sdr(s_hat, s, cfg)) <= 1e-6);
}

TEST_CASE("si-sdr: perfect estimate clamps near the eps ceiling") {
  auto s = random_waveform(500, 21);
  LossConfig cfg;
  const double loss = losses::loss_si_sdr(s, s, cfg);
  std::vector<double> sq(s.samples.size());
  for (std::size_t i = 0; i < sq.size(); ++i)
    sq[i] = s.samples[i] * s.samples[i];
  const double cap = -db_from_power(pairwise_sum(sq) / cfg.sisdr_eps);
  CHECK(loss == doctest::Approx(cap).epsilon(1e-9));
}

TEST_CASE("si-sdr: scale invariance via alpha") {
  auto s = random_waveform(800, 22);
  auto s_hat = random_waveform(800, 23);
  LossConfig cfg;
  const double base = losses::loss_si_sdr(s_hat, s, cfg);
  for (double c : {0.1, 0.5, 2.0, 10.0}) {
    auto scaled = s_hat;
    for (auto& v : scaled.samples) v *= c;
    CHECK(std::abs(losses::loss_si_sdr(scaled, s, cfg) - base) <= 1e-6);
  }
  CHECK_THROWS_AS(
      losses::loss_si_sdr(s_hat, dsp::Waveform{{0.0, 0.0, 0.0}, 16000}, cfg),
      std::invalid_argument);
}

TEST_CASE("hybrid endpoints equal their components") {
  auto inst = random_instance(9);
  LossConfig cfg;

  cfg.beta = 1.0;
  const double lp = losses::loss_log_posterior(inst.mask, inst.x, inst.s, cfg);
  CHECK(losses::loss_hybrid(inst.mask, inst.x, inst.s, inst.clean, cfg) ==
        doctest::Approx(lp).epsilon(1e-12));

  cfg.beta = 0.0;
  const auto x_mag = dsp::magnitude(inst.x);
  const auto gain = stat::amap_gain(inst.mask, x_mag);
  MatF est_mag(x_mag.rows(), x_mag.cols());
  for (std::size_t i = 0; i < est_mag.size(); ++i)
    est_mag.data()[i] = gain.data()[i] * x_mag.data()[i];
  const auto est = dsp::istft(
      dsp::recombine(est_mag, dsp::phase(inst.x), inst.x.config,
                     inst.x.source_len));
  const double sisdr = losses::loss_si_sdr(est, inst.clean, cfg);
  CHECK(losses::loss_hybrid(inst.mask, inst.x, inst.s, inst.clean, cfg) ==
        doctest::Approx(sisdr).epsilon(1e-12));
}

TEST_CASE("hybrid combines components with beta weights") {
  auto inst = random_instance(10);
  LossConfig cfg;
  cfg.beta = 0.01;
  const double lp = losses::loss_log_posterior(inst.mask, inst.x, inst.s, cfg);
  cfg.beta = 0.0;
  const double sisdr_term =
      losses::loss_hybrid(inst.mask, inst.x, inst.s, inst.clean, cfg);
  cfg.beta = 0.01;
  CHECK(losses::loss_hybrid(inst.mask, inst.x, inst.s, inst.clean, cfg) ==
        doctest::Approx(0.01 * lp + 0.99 * sisdr_term).epsilon(1e-12));
}

TEST_CASE("bin-order permutation moves losses by at most 1e-9") {
  auto inst = random_instance(12);
  LossConfig cfg;
  const double mse0 = losses::loss_mse(inst.mask, inst.x, inst.s);
  const double lp0 = losses::loss_log_posterior(inst.mask, inst.x, inst.s, cfg);

  // coherent permutation of all bin-indexed containers
  const std::size_t n = inst.x.data.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(13);
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);

  Instance shuffled = inst;
  for (std::size_t i = 0; i < n; ++i) {
    shuffled.x.data.data()[i] = inst.x.data.data()[perm[i]];
    shuffled.s.data.data()[i] = inst.s.data.data()[perm[i]];
    shuffled.mask.wiener.data()[i] = inst.mask.wiener.data()[perm[i]];
    shuffled.mask.log_var.data()[i] = inst.mask.log_var.data()[perm[i]];
  }
  CHECK(std::abs(losses::loss_mse(shuffled.mask, shuffled.x, shuffled.s) -
                 mse0) <= 1e-9);
  CHECK(std::abs(losses::loss_log_posterior(shuffled.mask, shuffled.x,
                                            shuffled.s, cfg) -
                 lp0) <= 1e-9);
}

TEST_CASE("graph builders agree with plain evaluation") {
  auto inst = random_instance(14);
  LossConfig cfg;
  auto wiener = mask_tensor(inst.mask.wiener);
  auto log_var = mask_tensor(inst.mask.log_var);

  CHECK(losses::mse_graph(wiener, inst.x, inst.s).item() ==
        doctest::Approx(losses::loss_mse(inst.mask, inst.x, inst.s))
            .epsilon(1e-13));
  CHECK(losses::log_posterior_graph(wiener, log_var, inst.x, inst.s, cfg)
            .item() ==
        doctest::Approx(
            losses::loss_log_posterior(inst.mask, inst.x, inst.s, cfg))
            .epsilon(1e-13));
  CHECK(
      losses::hybrid_graph(wiener, log_var, inst.x, inst.s,
                           inst.clean.samples, cfg)
          .item() ==
      doctest::Approx(
          losses::loss_hybrid(inst.mask, inst.x, inst.s, inst.clean, cfg))
          .epsilon(1e-12));
}

TEST_CASE("loss graphs differentiate correctly w.r.t. mask and log-variance") {
  // Small instance; checks every element including the istft adjoint
  // path inside the hybrid loss.
  auto inst = random_instance(15, 120, 16);
  LossConfig cfg;
  cfg.beta = 0.3;

  auto wiener = mask_tensor(inst.mask.wiener);
  auto log_var = mask_tensor(inst.mask.log_var);

  SUBCASE("mse") {
    auto rep = gradcheck::run({wiener}, [&] {
      return losses::mse_graph(wiener, inst.x, inst.s);
    });
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("log posterior") {
    auto rep = gradcheck::run({wiener, log_var}, [&] {
      return losses::log_posterior_graph(wiener, log_var, inst.x, inst.s, cfg);
    });
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("si-sdr of amap reconstruction") {
    auto rep = gradcheck::run({wiener, log_var}, [&] {
      return losses::si_sdr_graph(
          losses::amap_waveform_graph(wiener, log_var, inst.x),
          inst.clean.samples, cfg);
    });
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("si-sdr of wiener reconstruction") {
    auto rep = gradcheck::run({wiener}, [&] {
      return losses::si_sdr_graph(losses::wiener_waveform_graph(wiener, inst.x),
                                  inst.clean.samples, cfg);
    });
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("hybrid") {
    auto rep = gradcheck::run({wiener, log_var}, [&] {
      return losses::hybrid_graph(wiener, log_var, inst.x, inst.s,
                                  inst.clean.samples, cfg);
    });
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  cfg.beta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.beta = 0.5;
  cfg.lambda_floor = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(losses::loss_kind_from_string("nope"),
                  std::invalid_argument);
  CHECK(losses::loss_kind_from_string("hybrid") == LossKind::kHybrid);
}

TEST_CASE("shape mismatches are rejected") {
  auto inst = random_instance(16);
  auto bad = inst.s;
  bad.data = MatC(inst.s.bins(), inst.s.frames() + 1);
  CHECK_THROWS_AS(losses::loss_mse(inst.mask, inst.x, bad),
                  std::invalid_argument);
}
