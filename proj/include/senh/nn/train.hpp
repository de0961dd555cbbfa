// Training recipe: Adam, global grad-norm clipping, LR halving on a
// stagnant validation loss, early stopping, best-checkpoint tracking.
// Deterministic for a fixed seed.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "senh/dsp.hpp"
#include "senh/losses.hpp"
#include "senh/nn/checkpoint.hpp"
#include "senh/nn/network.hpp"

namespace senh::nn {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lr = 0.001;
  double grad_clip_norm = 5.0;
  std::size_t lr_halve_patience = 3;    // epochs
  std::size_t early_stop_patience = 10; // epochs
  std::uint64_t seed = 0;

  void validate() const;
};

// Halves the learning rate after `halve_patience` consecutive epochs
// without a validation improvement; requests a stop after
// `stop_patience`. "Improvement" means strictly below the best so far.
class PatienceScheduler {
 public:
  PatienceScheduler(double lr, std::size_t halve_patience,
                    std::size_t stop_patience);

  struct Decision {
    double lr;
    bool improved = false;
    bool halved = false;
    bool stop = false;
  };

  Decision observe(double val_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_;
  std::size_t halve_patience_;
  std::size_t stop_patience_;
  double best_;
  std::size_t stagnant_halve_ = 0;
  std::size_t stagnant_stop_ = 0;
};

struct Utterance {
  dsp::Waveform mixture;
  dsp::Waveform clean;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  bool lr_halved = false;
};

struct TrainResult {
  ModelCheckpoint best;  // best-validation checkpoint
  std::vector<EpochStats> log;
  bool diverged = false;
  std::size_t epochs_run = 0;
};

// Utterances are batched with per-batch zero padding to the longest
// item; the loss ignores padded frames (outputs are narrowed to each
// utterance's true frame count, which causality makes exact).
TrainResult train(const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& val_set,
                  const TrainConfig& tcfg, const losses::LossConfig& lcfg,
                  const NetworkConfig& ncfg, const dsp::StftConfig& scfg);

// Per-epoch log lines, tab-separated, fixed formatting; reruns with the
// same seed produce byte-identical text.
std::string format_epoch_log(const std::vector<EpochStats>& log);

}  // namespace senh::nn
