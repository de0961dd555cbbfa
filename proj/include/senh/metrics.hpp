// Evaluation-side measurements: SI-SDR (and improvement over noisy),
// segmental SNR, magnitude error maps, and uncertainty-vs-error
// correlation.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "senh/data.hpp"
#include "senh/dsp.hpp"
#include "senh/mat.hpp"
#include "senh/nn/network.hpp"
#include "senh/pipeline.hpp"

namespace senh::metrics {

// Exact Eq.-9 ratio (no eps); degenerate perfect/orthogonal estimates
// are reported as the +-60 dB sentinel.
inline constexpr double kSiSdrCapDb = 60.0;
double si_sdr_db(const dsp::Waveform& s_hat, const dsp::Waveform& s);

// Mean over frames of 10 log10(||s_f||^2 / ||s_f - s_hat_f||^2), each
// frame clamped to [-10, 35] dB; frames with reference energy below
// 1e-8 are excluded. Throws if every frame is silent.
double seg_snr_db(const dsp::Waveform& s_hat, const dsp::Waveform& s,
                  std::size_t frame_len = 512, std::size_t hop = 512);

// | |S_hat| - |S| | element-wise.
MatF error_map(const MatF& s_mag, const MatF& s_hat_mag);

struct CorrelationStats {
  double pearson_log = 0.0;  // between log lambda and log error (floored)
  double spearman = 0.0;     // rank correlation on the raw maps
};

CorrelationStats uncertainty_error_correlation(const MatF& lambda_map,
                                               const MatF& err_map);

struct EvalRow {
  std::size_t index = 0;
  std::string mixture_path;
  double snr_db = 0.0;
  double si_sdr_noisy = 0.0;
  double si_sdr_est = 0.0;
  double si_sdr_improvement = 0.0;
  double seg_snr = 0.0;
  double spearman = 0.0;
  double pearson_log = 0.0;
};

struct EvalSummary {
  std::size_t utterances = 0;
  double mean_si_sdr = 0.0, ci95_si_sdr = 0.0;
  double mean_si_sdri = 0.0, ci95_si_sdri = 0.0;
  double mean_seg_snr = 0.0, ci95_seg_snr = 0.0;
  double pooled_spearman = 0.0;
  double pooled_pearson_log = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalSummary summary;
  std::string estimator;
};

// Pure function of (manifest, network, estimator); rows follow manifest
// order. Confidence intervals are mean +- 1.96 * stderr.
EvalReport evaluate(const data::DatasetManifest& manifest,
                    const std::string& manifest_dir, const nn::MaskNet& net,
                    pipeline::Estimator estimator,
                    std::optional<data::Split> split = std::nullopt);

// Tab-separated rows plus a '#'-prefixed summary block; stable bytes.
std::string format_report(const EvalReport& report);

}  // namespace senh::metrics
