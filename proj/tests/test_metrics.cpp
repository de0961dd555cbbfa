#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "senh/common.hpp"
#include "senh/data.hpp"
#include "senh/metrics.hpp"
#include "senh/nn/checkpoint.hpp"

using namespace senh;
namespace fs = std::filesystem;

namespace {

dsp::Waveform wf(std::vector<double> samples) {
  dsp::Waveform w;
  w.samples = std::move(samples);
  return w;
}

dsp::Waveform random_waveform(std::size_t n, std::uint64_t seed,
                              double amp = 0.5) {
  Rng rng(seed);
  dsp::Waveform w;
  w.samples = oracle::random_signal(n, rng, amp);
  return w;
}

// Debug network: zero weights except head biases, so the mask and
// log-variance are constant over all bins.
nn::MaskNet debug_net(std::size_t n_freq, double mask_bias, double var_bias) {
  nn::NetworkConfig cfg;
  cfg.n_freq = n_freq;
  cfg.hidden_channels = 4;
  cfg.n_blocks = 1;
  nn::MaskNet net(cfg);
  auto w = net.flat_weights();
  const std::size_t f = cfg.n_freq, h = cfg.hidden_channels;
  const std::size_t var_b0 = w.size() - f;
  const std::size_t mask_b0 = w.size() - f - f * h - f;
  for (std::size_t i = 0; i < f; ++i) {
    w[mask_b0 + i] = mask_bias;
    w[var_b0 + i] = var_bias;
  }
  net.set_flat_weights(w);
  return net;
}

}  // namespace

TEST_CASE("si_sdr_db hand value: s=[1,1], s_hat=[1,0] is exactly 0 dB") {
  CHECK(metrics::si_sdr_db(wf({1.0, 0.0}), wf({1.0, 1.0})) == 0.0);
}

TEST_CASE("si_sdr_db caps degenerate cases at the sentinel") {
  auto s = random_waveform(300, 1);
  CHECK(metrics::si_sdr_db(s, s) == metrics::kSiSdrCapDb);

  auto neg = s;
  for (auto& v : neg.samples) v = -v;
  CHECK(metrics::si_sdr_db(neg, s) == metrics::kSiSdrCapDb);

  // orthogonal estimate: alpha = 0
  CHECK(metrics::si_sdr_db(wf({1.0, -1.0}), wf({1.0, 1.0})) ==
        -metrics::kSiSdrCapDb);

  CHECK_THROWS_AS(metrics::si_sdr_db(s, wf(std::vector<double>(300, 0.0))),
                  std::invalid_argument);
}

TEST_CASE("si_sdr_db is scale invariant in the estimate") {
  auto s = random_waveform(500, 2);
  auto s_hat = random_waveform(500, 3);
  const double base = metrics::si_sdr_db(s_hat, s);
  for (double c : {0.1, 0.7, 3.0, 10.0}) {
    auto scaled = s_hat;
    for (auto& v : scaled.samples) v *= c;
    CHECK(std::abs(metrics::si_sdr_db(scaled, s) - base) <= 1e-6);
  }
  // simultaneous scaling of both arguments
  auto s2 = s, sh2 = s_hat;
  for (auto& v : s2.samples) v *= 4.0;
  for (auto& v : sh2.samples) v *= 4.0;
  CHECK(std::abs(metrics::si_sdr_db(sh2, s2) - base) <= 1e-6);
}

TEST_CASE("seg_snr_db: clamp ceiling and zero-estimate floor") {
  auto s = random_waveform(4096, 4);
  CHECK(metrics::seg_snr_db(s, s) == 35.0);

  auto zero = wf(std::vector<double>(4096, 0.0));
  // error energy equals reference energy in every active frame
  CHECK(metrics::seg_snr_db(zero, s) == doctest::Approx(0.0));

  CHECK_THROWS_AS(metrics::seg_snr_db(zero, zero), std::invalid_argument);
}

TEST_CASE("seg_snr_db: controlled 10 dB perturbation") {
  auto s = random_waveform(8192, 5);
  dsp::Waveform noisy = s;
  Rng rng(6);
  for (std::size_t start = 0; start + 512 <= s.samples.size(); start += 512) {
    double ref = 0.0;
    for (std::size_t i = start; i < start + 512; ++i)
      ref += s.samples[i] * s.samples[i];
    std::vector<double> e(512);
    double ee = 0.0;
    for (auto& v : e) {
      v = rng.gaussian();
      ee += v * v;
    }
    const double scale = std::sqrt(ref / (10.0 * ee));  // exactly 10 dB down
    for (std::size_t i = 0; i < 512; ++i)
      noisy.samples[start + i] = s.samples[start + i] + scale * e[i];
  }
  CHECK(metrics::seg_snr_db(noisy, s) == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("error_map basics and loop oracle") {
  MatF a(3, 3, 0.5), b(3, 3, 0.5);
  auto zero = metrics::error_map(a, b);
  for (double v : zero.data()) CHECK(v == 0.0);

  b(1, 2) = 2.5;
  auto one = metrics::error_map(a, b);
  CHECK(one(1, 2) == 2.0);
  CHECK(one(0, 0) == 0.0);

  Rng rng(7);
  MatF x(5, 4), y(5, 4);
  for (auto& v : x.data()) v = rng.uniform(0.0, 3.0);
  for (auto& v : y.data()) v = rng.uniform(0.0, 3.0);
  auto m = metrics::error_map(x, y);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(m(r, c) == std::abs(y(r, c) - x(r, c)));

  MatF bad(4, 4);
  CHECK_THROWS_AS(metrics::error_map(x, bad), std::invalid_argument);
}

TEST_CASE("uncertainty-error correlation: monotone relation gives spearman 1") {
  Rng rng(8);
  MatF lambda(40, 25), err(40, 25);
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    lambda.data()[i] = rng.uniform(0.001, 2.0);
    err.data()[i] = 3.0 * lambda.data()[i];
  }
  auto stats = metrics::uncertainty_error_correlation(lambda, err);
  CHECK(stats.spearman == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats.pearson_log == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("uncertainty-error correlation: independent maps decorrelate") {
  Rng rng(9);
  MatF lambda(100, 100), err(100, 100);
  for (auto& v : lambda.data()) v = rng.uniform(0.001, 2.0);
  for (auto& v : err.data()) v = rng.uniform(0.001, 2.0);
  auto stats = metrics::uncertainty_error_correlation(lambda, err);
  CHECK(std::abs(stats.spearman) < 0.1);

  MatF constant(100, 100, 1.0);
  CHECK_THROWS_AS(metrics::uncertainty_error_correlation(constant, err),
                  std::invalid_argument);
}

TEST_CASE("evaluate: identity mask leaves SI-SDR unchanged; A-MAP with "
          "vanishing uncertainty matches WF") {
  auto dir = fs::temp_directory_path() / "senh_eval_test";
  fs::remove_all(dir);

  std::vector<data::DatasetSpecEntry> specs;
  for (int i = 0; i < 3; ++i) {
    data::DatasetSpecEntry e;
    e.spec.snr_db = 5.0 + 2.0 * i;
    e.spec.duration_s = 0.4;
    e.spec.seed = 100 + i;
    e.split = data::Split::kTest;
    specs.push_back(e);
  }
  auto manifest = data::build_dataset(specs, dir.string());

  // sigmoid(40) rounds to 1.0 in double precision: identity mask
  auto identity = debug_net(9, 40.0, -800.0);
  auto report_wf = metrics::evaluate(manifest, dir.string(), identity,
                                     pipeline::Estimator::kWienerFilter);
  for (const auto& row : report_wf.rows)
    CHECK(std::abs(row.si_sdr_improvement) <= 1e-6);

  // lambda -> 0 collapses the A-MAP gain onto the Wiener mask
  auto half = debug_net(9, 0.3, -800.0);
  auto r_wf = metrics::evaluate(manifest, dir.string(), half,
                                pipeline::Estimator::kWienerFilter);
  auto r_amap = metrics::evaluate(manifest, dir.string(), half,
                                  pipeline::Estimator::kAmap);
  for (std::size_t i = 0; i < r_wf.rows.size(); ++i) {
    CHECK(r_amap.rows[i].si_sdr_est ==
          doctest::Approx(r_wf.rows[i].si_sdr_est).epsilon(1e-12));
    CHECK(r_amap.rows[i].seg_snr ==
          doctest::Approx(r_wf.rows[i].seg_snr).epsilon(1e-12));
  }

  // deterministic report bytes
  auto again = metrics::evaluate(manifest, dir.string(), half,
                                 pipeline::Estimator::kAmap);
  CHECK(metrics::format_report(again) == metrics::format_report(r_amap));

  // split filter
  CHECK_THROWS_AS(metrics::evaluate(manifest, dir.string(), half,
                                    pipeline::Estimator::kAmap,
                                    data::Split::kTrain),
                  std::invalid_argument);

  fs::remove_all(dir);
}

TEST_CASE("amap gain exceeds wf gain bin-wise on a real mixture") {
  auto clean = data::synth_speech(data::SpeechKind::kHarmonicVoice, 0.4, 51);
  auto noise = data::synth_noise(data::NoiseKind::kWhite, 0.4, 52);
  auto mix = data::mix_at_snr(clean, noise, 5.0);

  auto net = debug_net(9, 0.0, 0.5);
  auto wf_result =
      pipeline::enhance(mix.mixture, net, pipeline::Estimator::kWienerFilter);
  auto amap_result =
      pipeline::enhance(mix.mixture, net, pipeline::Estimator::kAmap);
  for (std::size_t i = 0; i < wf_result.gain.size(); ++i)
    CHECK(amap_result.gain.data()[i] >= wf_result.gain.data()[i]);
  CHECK(amap_result.enhanced.samples != wf_result.enhanced.samples);
}
