// senh: speech enhancement with joint Wiener-mask and uncertainty
// estimation. Subcommands: synth, train, enhance, evaluate, spectrogram.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "senh/common.hpp"
#include "senh/data.hpp"
#include "senh/losses.hpp"
#include "senh/metrics.hpp"
#include "senh/nn/checkpoint.hpp"
#include "senh/nn/train.hpp"
#include "senh/pipeline.hpp"

namespace fs = std::filesystem;
using namespace senh;

namespace {

int verbosity() {
  const char* env = std::getenv("SENH_VERBOSE");
  return env ? std::atoi(env) : 0;
}

void log_info(const std::string& msg) {
  if (verbosity() >= 1) std::cerr << "[senh] " << msg << "\n";
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> ratios;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) ratios.push_back(std::stod(item));
  if (ratios.size() < 1 || ratios.size() > 3)
    throw CLI::ValidationError("--split-ratios",
                               "expected 1-3 comma-separated ratios");
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw CLI::ValidationError("--split-ratios", "negative ratio");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw CLI::ValidationError("--split-ratios", "ratios must sum to 1");
  return ratios;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// ---- synth ----

struct SynthArgs {
  std::size_t count = 10;
  double snr_min = -5.0;
  double snr_max = 20.0;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string split_ratios = "0.8,0.2";
  double duration = 2.0;
  std::string speech = "harmonic";
  std::string noise = "white";
};

int run_synth(const SynthArgs& args) {
  const auto ratios = parse_ratios(args.split_ratios);
  const auto speech_kind = data::speech_kind_from_string(args.speech);
  const auto noise_kind = data::noise_kind_from_string(args.noise);

  // deterministic split sizes: floor each ratio, leftovers go to train
  std::vector<std::size_t> counts(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    counts[i] = std::size_t(ratios[i] * double(args.count) + 1e-9);
    assigned += counts[i];
  }
  counts[0] += args.count - assigned;

  const data::Split split_order[3] = {data::Split::kTrain, data::Split::kVal,
                                      data::Split::kTest};
  Rng rng(args.seed);
  std::vector<data::DatasetSpecEntry> specs;
  std::size_t split_idx = 0, in_split = 0;
  for (std::size_t i = 0; i < args.count; ++i) {
    while (split_idx < counts.size() && in_split >= counts[split_idx]) {
      ++split_idx;
      in_split = 0;
    }
    data::DatasetSpecEntry e;
    e.split = split_order[std::min<std::size_t>(split_idx, 2)];
    e.spec.snr_db = rng.uniform(args.snr_min, args.snr_max);
    e.spec.duration_s = args.duration;
    e.spec.seed = rng.next_u64();
    e.spec.speech_kind = speech_kind;
    e.spec.noise_kind = noise_kind;
    specs.push_back(e);
    ++in_split;
  }

  auto manifest = data::build_dataset(specs, args.out_dir);
  std::printf("wrote %zu entries (%zu train / %zu val / %zu test) to %s\n",
              manifest.entries.size(),
              manifest.of_split(data::Split::kTrain).size(),
              manifest.of_split(data::Split::kVal).size(),
              manifest.of_split(data::Split::kTest).size(),
              args.out_dir.c_str());
  std::printf("snr range [%g, %g] dB, duration %g s, speech %s, noise %s\n",
              args.snr_min, args.snr_max, args.duration, args.speech.c_str(),
              args.noise.c_str());
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string manifest;
  std::string loss = "hybrid";
  double beta = 0.01;
  std::size_t epochs = 50;
  std::size_t batch = 16;
  double lr = 0.001;
  double clip = 5.0;
  std::size_t halve_patience = 3;
  std::size_t stop_patience = 10;
  std::uint64_t seed = 0;
  std::string checkpoint_out;
  std::string log_out;
  std::size_t window = 512;
  std::size_t hidden = 64;
  std::size_t blocks = 3;
};

int run_train(const TrainArgs& args) {
  const auto manifest = data::read_manifest(args.manifest);
  const auto dir = data::manifest_dir_of(args.manifest);

  auto load_split = [&](data::Split split) {
    std::vector<nn::Utterance> set;
    for (const auto& e : manifest.of_split(split)) {
      auto loaded = data::load_entry(e, dir);
      set.push_back({std::move(loaded.mixture), std::move(loaded.clean)});
    }
    return set;
  };
  auto train_set = load_split(data::Split::kTrain);
  auto val_set = load_split(data::Split::kVal);
  if (train_set.empty())
    throw std::runtime_error("manifest has no train entries");
  if (val_set.empty())
    throw std::runtime_error(
        "manifest has no val entries (synth with --split-ratios 0.8,0.2)");
  log_info("loaded " + std::to_string(train_set.size()) + " train / " +
           std::to_string(val_set.size()) + " val utterances");

  const auto scfg = dsp::StftConfig::hann(args.window);
  nn::NetworkConfig ncfg;
  ncfg.n_freq = scfg.bins();
  ncfg.hidden_channels = args.hidden;
  ncfg.n_blocks = args.blocks;

  nn::TrainConfig tcfg;
  tcfg.epochs = args.epochs;
  tcfg.batch_size = args.batch;
  tcfg.lr = args.lr;
  tcfg.grad_clip_norm = args.clip;
  tcfg.lr_halve_patience = args.halve_patience;
  tcfg.early_stop_patience = args.stop_patience;
  tcfg.seed = args.seed;

  losses::LossConfig lcfg;
  lcfg.kind = losses::loss_kind_from_string(args.loss);
  lcfg.beta = args.beta;

  auto result = nn::train(train_set, val_set, tcfg, lcfg, ncfg, scfg);

  result.best.save(args.checkpoint_out);
  const std::string log_path =
      args.log_out.empty() ? args.checkpoint_out + ".log" : args.log_out;
  write_text_file(log_path, nn::format_epoch_log(result.log));

  if (result.diverged) {
    std::fprintf(stderr,
                 "training diverged (validation loss NaN) at epoch %zu; "
                 "last good checkpoint written to %s\n",
                 result.epochs_run, args.checkpoint_out.c_str());
    return 2;
  }
  std::printf("trained %zu epochs (loss %s); best val loss %.6f at epoch "
              "%zu; checkpoint %s; log %s\n",
              result.epochs_run, args.loss.c_str(), result.best.best_val_loss,
              result.best.epoch, args.checkpoint_out.c_str(),
              log_path.c_str());
  return 0;
}

// ---- enhance ----

struct EnhanceArgs {
  std::string in_path;
  std::string checkpoint;
  std::string estimator = "amap";
  std::string out_path;
  std::string export_uncertainty;
};

std::string csv_of(const MatF& map) {
  std::string out;
  char cell[32];
  for (std::size_t f = 0; f < map.rows(); ++f) {
    for (std::size_t t = 0; t < map.cols(); ++t) {
      std::snprintf(cell, sizeof(cell), "%.8g", map(f, t));
      out += cell;
      out += (t + 1 == map.cols()) ? '\n' : ',';
    }
  }
  return out;
}

int run_enhance(const EnhanceArgs& args) {
  const auto ckpt = nn::ModelCheckpoint::load(args.checkpoint);
  const auto net = ckpt.to_network();
  const auto est = pipeline::estimator_from_string(args.estimator);
  const auto noisy = data::read_wav(args.in_path);
  log_info("enhancing " + args.in_path + " (" +
           std::to_string(noisy.duration_s()) + " s)");

  auto result = pipeline::enhance(noisy, net, est);
  data::write_wav(args.out_path, result.enhanced);
  std::printf("wrote %s (%zu samples, estimator %s)\n", args.out_path.c_str(),
              result.enhanced.samples.size(), args.estimator.c_str());

  if (!args.export_uncertainty.empty()) {
    MatF lambda(result.mask.log_var.rows(), result.mask.log_var.cols());
    for (std::size_t i = 0; i < lambda.size(); ++i)
      lambda.data()[i] = std::exp(result.mask.log_var.data()[i]);
    write_text_file(args.export_uncertainty, csv_of(lambda));
    std::printf("wrote uncertainty map %s (%zu x %zu)\n",
                args.export_uncertainty.c_str(), lambda.rows(),
                lambda.cols());
  }
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  std::string manifest;
  std::string checkpoint;
  std::string estimator = "amap";
  std::string report;
  std::string split;
};

int run_evaluate(const EvaluateArgs& args) {
  const auto manifest = data::read_manifest(args.manifest);
  const auto ckpt = nn::ModelCheckpoint::load(args.checkpoint);
  const auto net = ckpt.to_network();
  std::optional<data::Split> split;
  if (!args.split.empty()) split = data::split_from_string(args.split);

  auto report =
      metrics::evaluate(manifest, data::manifest_dir_of(args.manifest), net,
                        pipeline::estimator_from_string(args.estimator), split);
  const auto text = metrics::format_report(report);
  write_text_file(args.report, text);
  std::printf("evaluated %zu utterances (estimator %s)\n",
              report.summary.utterances, args.estimator.c_str());
  std::printf("si_sdr %.3f +- %.3f dB | si_sdri %.3f +- %.3f dB | seg_snr "
              "%.3f +- %.3f dB\n",
              report.summary.mean_si_sdr, report.summary.ci95_si_sdr,
              report.summary.mean_si_sdri, report.summary.ci95_si_sdri,
              report.summary.mean_seg_snr, report.summary.ci95_seg_snr);
  std::printf("pooled spearman(lambda, error) %.4f | pooled pearson(log) "
              "%.4f\n",
              report.summary.pooled_spearman,
              report.summary.pooled_pearson_log);
  std::printf("report written to %s\n", args.report.c_str());
  return 0;
}

// ---- spectrogram ----

struct SpectrogramArgs {
  std::string in_path;
  std::string out_path;
  std::string format = "pgm";
  std::string kind = "magnitude";
  std::string checkpoint;
};

int run_spectrogram(const SpectrogramArgs& args) {
  const auto wav = data::read_wav(args.in_path);

  MatF map;
  if (args.kind == "magnitude") {
    map = dsp::magnitude(dsp::stft(wav, dsp::StftConfig::hann(512)));
  } else if (args.kind == "mask" || args.kind == "uncertainty") {
    if (args.checkpoint.empty())
      throw std::runtime_error("--kind " + args.kind +
                               " requires --checkpoint");
    const auto net = nn::ModelCheckpoint::load(args.checkpoint).to_network();
    auto result = pipeline::enhance(wav, net, pipeline::Estimator::kAmap);
    if (args.kind == "mask") {
      map = result.mask.wiener;
    } else {
      map = MatF(result.mask.log_var.rows(), result.mask.log_var.cols());
      for (std::size_t i = 0; i < map.size(); ++i)
        map.data()[i] = std::exp(result.mask.log_var.data()[i]);
    }
  } else {
    throw std::runtime_error("unknown --kind " + args.kind +
                             " (want magnitude|mask|uncertainty)");
  }

  // dB view: 20 log10(value + eps)
  MatF db_map(map.rows(), map.cols());
  for (std::size_t i = 0; i < map.size(); ++i)
    db_map.data()[i] = db_from_amplitude(map.data()[i] + kMagnitudeFloor);

  if (args.format == "csv") {
    write_text_file(args.out_path, csv_of(db_map));
    std::printf("wrote %s: %zu rows x %zu cols (dB)\n", args.out_path.c_str(),
                db_map.rows(), db_map.cols());
    return 0;
  }
  if (args.format != "pgm")
    throw std::runtime_error("unknown --format " + args.format +
                             " (want pgm|csv)");

  double lo = db_map.data()[0], hi = db_map.data()[0];
  for (double v : db_map.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::string pgm = "P5\n" + std::to_string(db_map.cols()) + " " +
                    std::to_string(db_map.rows()) + "\n255\n";
  for (std::size_t f = 0; f < db_map.rows(); ++f) {
    const std::size_t row = db_map.rows() - 1 - f;  // low bins at the bottom
    for (std::size_t t = 0; t < db_map.cols(); ++t)
      pgm += char(std::uint8_t((db_map(row, t) - lo) * scale));
  }
  std::ofstream out(args.out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + args.out_path);
  out.write(pgm.data(), long(pgm.size()));
  std::printf("wrote %s: %zu x %zu, auto-ranged [%.2f, %.2f] dB\n",
              args.out_path.c_str(), db_map.cols(), db_map.rows(), lo, hi);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech enhancement with joint mask and uncertainty estimation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic noisy-speech dataset");
  synth_cmd->add_option("--count", synth.count, "number of utterances")
      ->default_val(10);
  synth_cmd->add_option("--snr-min", synth.snr_min, "minimum mixture SNR (dB)")
      ->default_val(-5.0);
  synth_cmd->add_option("--snr-max", synth.snr_max, "maximum mixture SNR (dB)")
      ->default_val(20.0);
  synth_cmd->add_option("--out-dir", synth.out_dir, "output directory")
      ->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->default_val(0);
  synth_cmd
      ->add_option("--split-ratios", synth.split_ratios,
                   "train,val[,test] ratios")
      ->default_val("0.8,0.2");
  synth_cmd
      ->add_option("--duration", synth.duration, "utterance duration (s)")
      ->default_val(2.0);
  synth_cmd
      ->add_option("--speech", synth.speech, "speech kind: harmonic|chirp")
      ->default_val("harmonic");
  synth_cmd
      ->add_option("--noise", synth.noise, "noise kind: white|pink|babble")
      ->default_val("white");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the masking network");
  train_cmd->add_option("--manifest", train.manifest, "dataset manifest")
      ->required();
  train_cmd
      ->add_option("--loss", train.loss, "loss: mse|logpost|sisdr|hybrid")
      ->default_val("hybrid");
  train_cmd->add_option("--beta", train.beta, "hybrid weight on log-posterior")
      ->default_val(0.01);
  train_cmd->add_option("--epochs", train.epochs, "training epochs")
      ->default_val(50);
  train_cmd->add_option("--batch", train.batch, "batch size")->default_val(16);
  train_cmd->add_option("--lr", train.lr, "Adam learning rate")
      ->default_val(0.001);
  train_cmd->add_option("--clip", train.clip, "max gradient norm")
      ->default_val(5.0);
  train_cmd
      ->add_option("--halve-patience", train.halve_patience,
                   "epochs without val improvement before halving the lr")
      ->default_val(3);
  train_cmd
      ->add_option("--stop-patience", train.stop_patience,
                   "epochs without val improvement before early stop")
      ->default_val(10);
  train_cmd->add_option("--seed", train.seed, "training seed")->default_val(0);
  train_cmd
      ->add_option("--checkpoint-out", train.checkpoint_out,
                   "output checkpoint path")
      ->required();
  train_cmd->add_option("--log-out", train.log_out,
                        "per-epoch log path (default: checkpoint + .log)");
  train_cmd->add_option("--window", train.window, "stft window (power of 2)")
      ->default_val(512);
  train_cmd->add_option("--hidden", train.hidden, "hidden channels")
      ->default_val(64);
  train_cmd->add_option("--blocks", train.blocks, "conv blocks")
      ->default_val(3);

  EnhanceArgs enhance;
  auto* enhance_cmd = app.add_subcommand("enhance", "enhance a wav file");
  enhance_cmd->add_option("--in", enhance.in_path, "input wav")->required();
  enhance_cmd->add_option("--checkpoint", enhance.checkpoint, "checkpoint")
      ->required();
  enhance_cmd
      ->add_option("--estimator", enhance.estimator, "estimator: wf|amap")
      ->default_val("amap");
  enhance_cmd->add_option("--out", enhance.out_path, "output wav")->required();
  enhance_cmd->add_option("--export-uncertainty", enhance.export_uncertainty,
                          "write the per-bin variance map as CSV");

  EvaluateArgs evaluate;
  auto* eval_cmd =
      app.add_subcommand("evaluate", "evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--manifest", evaluate.manifest, "dataset manifest")
      ->required();
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint, "checkpoint")
      ->required();
  eval_cmd
      ->add_option("--estimator", evaluate.estimator, "estimator: wf|amap")
      ->default_val("amap");
  eval_cmd->add_option("--report", evaluate.report, "output report path")
      ->required();
  eval_cmd->add_option("--split", evaluate.split,
                       "restrict to split: train|val|test");

  SpectrogramArgs spectrogram;
  auto* spec_cmd = app.add_subcommand(
      "spectrogram", "export magnitude / mask / uncertainty maps");
  spec_cmd->add_option("--in", spectrogram.in_path, "input wav")->required();
  spec_cmd->add_option("--out", spectrogram.out_path, "output path")
      ->required();
  spec_cmd->add_option("--format", spectrogram.format, "pgm|csv")
      ->default_val("pgm");
  spec_cmd
      ->add_option("--kind", spectrogram.kind,
                   "magnitude|mask|uncertainty")
      ->default_val("magnitude");
  spec_cmd->add_option("--checkpoint", spectrogram.checkpoint,
                       "checkpoint (for mask/uncertainty)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (train_cmd->parsed()) return run_train(train);
    if (enhance_cmd->parsed()) return run_enhance(enhance);
    if (eval_cmd->parsed()) return run_evaluate(evaluate);
    if (spec_cmd->parsed()) return run_spectrogram(spectrogram);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
