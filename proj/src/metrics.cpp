#include "senh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "senh/common.hpp"
#include "senh/losses.hpp"
#include "senh/stat_model.hpp"

namespace senh::metrics {

double si_sdr_db(const dsp::Waveform& s_hat, const dsp::Waveform& s) {
  const auto r = losses::detail::si_sdr_ratio(s_hat.samples, s.samples);
  if (r.residual_energy <= 0.0) return kSiSdrCapDb;
  if (r.scaled_target_energy <= 0.0) return -kSiSdrCapDb;
  return std::clamp(db_from_power(r.scaled_target_energy / r.residual_energy),
                    -kSiSdrCapDb, kSiSdrCapDb);
}

double seg_snr_db(const dsp::Waveform& s_hat, const dsp::Waveform& s,
                  std::size_t frame_len, std::size_t hop) {
  if (s_hat.samples.size() != s.samples.size())
    throw std::invalid_argument("seg_snr: length mismatch");
  if (frame_len == 0 || hop == 0)
    throw std::invalid_argument("seg_snr: zero frame or hop");

  std::vector<double> frame_vals;
  for (std::size_t start = 0; start + frame_len <= s.samples.size();
       start += hop) {
    double ref = 0.0, err = 0.0;
    for (std::size_t i = start; i < start + frame_len; ++i) {
      ref += s.samples[i] * s.samples[i];
      const double d = s.samples[i] - s_hat.samples[i];
      err += d * d;
    }
    if (ref < 1e-8) continue;  // silent reference frame
    double v = err <= 0.0 ? 35.0 : db_from_power(ref / err);
    frame_vals.push_back(std::clamp(v, -10.0, 35.0));
  }
  if (frame_vals.empty())
    throw std::invalid_argument("seg_snr: all reference frames silent");
  return pairwise_sum(frame_vals) / double(frame_vals.size());
}

MatF error_map(const MatF& s_mag, const MatF& s_hat_mag) {
  require_same_shape("error_map", s_mag, s_hat_mag);
  MatF out(s_mag.rows(), s_mag.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::abs(s_hat_mag.data()[i] - s_mag.data()[i]);
  return out;
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  const double ma = pairwise_sum(a) / n;
  const double mb = pairwise_sum(b) / n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    num += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0)
    throw std::invalid_argument("correlation: degenerate constant input");
  return num / std::sqrt(va * vb);
}

// average ranks with ties
std::vector<double> ranks_of(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * (double(i) + double(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

CorrelationStats correlation_of_vectors(const std::vector<double>& lambda,
                                        const std::vector<double>& err) {
  std::vector<double> log_l(lambda.size()), log_e(err.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    log_l[i] = std::log(std::max(lambda[i], kVarianceFloor));
    log_e[i] = std::log(std::max(err[i], kMagnitudeFloor));
  }
  CorrelationStats stats;
  stats.pearson_log = pearson(log_l, log_e);
  stats.spearman = pearson(ranks_of(lambda), ranks_of(err));
  return stats;
}

}  // namespace

CorrelationStats uncertainty_error_correlation(const MatF& lambda_map,
                                               const MatF& err_map) {
  require_same_shape("uncertainty_error_correlation", lambda_map, err_map);
  if (lambda_map.size() < 2)
    throw std::invalid_argument("correlation: need at least two bins");
  return correlation_of_vectors(lambda_map.data(), err_map.data());
}

EvalReport evaluate(const data::DatasetManifest& manifest,
                    const std::string& manifest_dir, const nn::MaskNet& net,
                    pipeline::Estimator estimator,
                    std::optional<data::Split> split) {
  EvalReport report;
  report.estimator = pipeline::to_string(estimator);
  const auto scfg = pipeline::stft_config_for(net.config());

  std::vector<double> pooled_lambda, pooled_err;
  std::size_t index = 0;
  for (const auto& entry : manifest.entries) {
    if (split && entry.split != *split) {
      ++index;
      continue;
    }
    auto loaded = data::load_entry(entry, manifest_dir);
    auto enhanced = pipeline::enhance(loaded.mixture, net, estimator);

    EvalRow row;
    row.index = index++;
    row.mixture_path = entry.mixture_path;
    row.snr_db = entry.snr_db;
    row.si_sdr_noisy = si_sdr_db(loaded.mixture, loaded.clean);
    row.si_sdr_est = si_sdr_db(enhanced.enhanced, loaded.clean);
    row.si_sdr_improvement = row.si_sdr_est - row.si_sdr_noisy;
    row.seg_snr = seg_snr_db(enhanced.enhanced, loaded.clean);

    const auto clean_mag = dsp::magnitude(dsp::stft(loaded.clean, scfg));
    const auto x_mag = dsp::magnitude(enhanced.noisy_spec);
    MatF est_mag(x_mag.rows(), x_mag.cols());
    MatF lambda(x_mag.rows(), x_mag.cols());
    for (std::size_t i = 0; i < est_mag.size(); ++i) {
      est_mag.data()[i] = enhanced.gain.data()[i] * x_mag.data()[i];
      lambda.data()[i] = std::exp(enhanced.mask.log_var.data()[i]);
    }
    const auto err = error_map(clean_mag, est_mag);
    // constant maps (e.g. debug checkpoints) have no defined correlation
    try {
      const auto corr = uncertainty_error_correlation(lambda, err);
      row.spearman = corr.spearman;
      row.pearson_log = corr.pearson_log;
    } catch (const std::invalid_argument&) {
      row.spearman = std::nan("");
      row.pearson_log = std::nan("");
    }

    pooled_lambda.insert(pooled_lambda.end(), lambda.data().begin(),
                         lambda.data().end());
    pooled_err.insert(pooled_err.end(), err.data().begin(), err.data().end());
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty())
    throw std::invalid_argument("evaluate: no matching manifest entries");

  auto mean_ci = [](const std::vector<double>& xs, double& mean, double& ci) {
    const double n = double(xs.size());
    mean = pairwise_sum(xs) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / (n - 1.0) : 0.0;
    ci = 1.96 * std::sqrt(var / n);
  };

  std::vector<double> sdr, sdri, seg;
  for (const auto& r : report.rows) {
    sdr.push_back(r.si_sdr_est);
    sdri.push_back(r.si_sdr_improvement);
    seg.push_back(r.seg_snr);
  }
  auto& s = report.summary;
  s.utterances = report.rows.size();
  mean_ci(sdr, s.mean_si_sdr, s.ci95_si_sdr);
  mean_ci(sdri, s.mean_si_sdri, s.ci95_si_sdri);
  mean_ci(seg, s.mean_seg_snr, s.ci95_seg_snr);
  try {
    const auto pooled = correlation_of_vectors(pooled_lambda, pooled_err);
    s.pooled_spearman = pooled.spearman;
    s.pooled_pearson_log = pooled.pearson_log;
  } catch (const std::invalid_argument&) {
    s.pooled_spearman = std::nan("");
    s.pooled_pearson_log = std::nan("");
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out =
      "index\tmixture\tsnr_db\tsi_sdr_noisy\tsi_sdr_est\tsi_sdri\tseg_snr\t"
      "spearman\tpearson_log\n";
  char line[512];
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line),
                  "%zu\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                  r.index, r.mixture_path.c_str(), r.snr_db, r.si_sdr_noisy,
                  r.si_sdr_est, r.si_sdr_improvement, r.seg_snr, r.spearman,
                  r.pearson_log);
    out += line;
  }
  const auto& s = report.summary;
  std::snprintf(line, sizeof(line), "# estimator\t%s\n# utterances\t%zu\n",
                report.estimator.c_str(), s.utterances);
  out += line;
  std::snprintf(line, sizeof(line),
                "# si_sdr_db\t%.6f\t+-\t%.6f\n# si_sdri_db\t%.6f\t+-\t%.6f\n",
                s.mean_si_sdr, s.ci95_si_sdr, s.mean_si_sdri, s.ci95_si_sdri);
  out += line;
  std::snprintf(line, sizeof(line),
                "# seg_snr_db\t%.6f\t+-\t%.6f\n# pooled_spearman\t%.6f\n"
                "# pooled_pearson_log\t%.6f\n",
                s.mean_seg_snr, s.ci95_seg_snr, s.pooled_spearman,
                s.pooled_pearson_log);
  out += line;
  return out;
}

}  // namespace senh::metrics
