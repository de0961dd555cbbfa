#include "senh/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "senh/common.hpp"
#include "senh/nn/optim.hpp"

namespace senh::nn {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0)
    throw std::invalid_argument("train config: zero epochs or batch size");
  if (!(lr > 0.0) || !(grad_clip_norm > 0.0))
    throw std::invalid_argument("train config: lr and clip must be positive");
  if (lr_halve_patience == 0 || early_stop_patience == 0)
    throw std::invalid_argument("train config: patience must be positive");
}

PatienceScheduler::PatienceScheduler(double lr, std::size_t halve_patience,
                                     std::size_t stop_patience)
    : lr_(lr),
      halve_patience_(halve_patience),
      stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

PatienceScheduler::Decision PatienceScheduler::observe(double val_loss) {
  Decision d{lr_};
  if (val_loss < best_) {
    best_ = val_loss;
    stagnant_halve_ = 0;
    stagnant_stop_ = 0;
    d.improved = true;
  } else {
    ++stagnant_halve_;
    ++stagnant_stop_;
    if (stagnant_halve_ >= halve_patience_) {
      lr_ *= 0.5;
      stagnant_halve_ = 0;
      d.halved = true;
    }
    if (stagnant_stop_ >= stop_patience_) d.stop = true;
  }
  d.lr = lr_;
  return d;
}

namespace {

struct PreparedUtterance {
  dsp::ComplexSpectrogram mixture_spec;
  dsp::ComplexSpectrogram clean_spec;
  MatF features;  // normalized log magnitude
  std::vector<double> clean_samples;
};

PreparedUtterance prepare(const Utterance& utt, const dsp::StftConfig& scfg) {
  if (utt.mixture.samples.size() != utt.clean.samples.size())
    throw std::invalid_argument("train: mixture/clean length mismatch");
  PreparedUtterance p;
  p.mixture_spec = dsp::stft(utt.mixture, scfg);
  p.clean_spec = dsp::stft(utt.clean, scfg);
  p.features = make_features(p.mixture_spec);
  p.clean_samples = utt.clean.samples;
  return p;
}

// Zero-pad features to pad_frames columns.
Tensor padded_features(const MatF& feats, std::size_t pad_frames) {
  const std::size_t f = feats.rows(), t = feats.cols();
  std::vector<double> buf(f * pad_frames, 0.0);
  for (std::size_t r = 0; r < f; ++r)
    for (std::size_t c = 0; c < t; ++c)
      buf[r * pad_frames + c] = feats(r, c);
  return Tensor::from({f, pad_frames}, std::move(buf));
}

double utterance_loss_graph_backward(const MaskNet& net,
                                     const PreparedUtterance& utt,
                                     std::size_t pad_frames,
                                     const losses::LossConfig& lcfg,
                                     bool do_backward) {
  const std::size_t t_valid = utt.features.cols();
  auto out = net.forward(padded_features(utt.features, pad_frames));
  Tensor wiener = out.wiener;
  Tensor log_var = out.log_var;
  if (pad_frames != t_valid) {
    wiener = narrow_cols(wiener, t_valid);
    log_var = narrow_cols(log_var, t_valid);
  }
  auto loss = losses::loss_graph(wiener, log_var, utt.mixture_spec,
                                 utt.clean_spec, utt.clean_samples, lcfg);
  if (do_backward) loss.backward();
  return loss.item();
}

}  // namespace

TrainResult train(const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& val_set,
                  const TrainConfig& tcfg, const losses::LossConfig& lcfg,
                  const NetworkConfig& ncfg, const dsp::StftConfig& scfg) {
  tcfg.validate();
  lcfg.validate();
  ncfg.validate();
  scfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty dataset");
  if (scfg.bins() != ncfg.n_freq)
    throw std::invalid_argument("train: stft bins do not match n_freq");

  std::vector<PreparedUtterance> train_prep, val_prep;
  train_prep.reserve(train_set.size());
  for (const auto& u : train_set) train_prep.push_back(prepare(u, scfg));
  val_prep.reserve(val_set.size());
  for (const auto& u : val_set) val_prep.push_back(prepare(u, scfg));

  std::size_t min_frames = train_prep.front().features.cols();
  for (const auto& p : train_prep)
    min_frames = std::min(min_frames, p.features.cols());
  if (ncfg.receptive_field() > min_frames)
    std::fprintf(stderr,
                 "warning: receptive field (%zu frames) exceeds the shortest "
                 "training utterance (%zu frames)\n",
                 ncfg.receptive_field(), min_frames);

  Rng rng(tcfg.seed);
  MaskNet net(ncfg, rng.derive(1).next_u64());
  auto params = net.parameters();
  AdamState adam;
  adam.init(net.parameter_count());
  AdamConfig adam_cfg;
  adam_cfg.lr = tcfg.lr;
  PatienceScheduler scheduler(tcfg.lr, tcfg.lr_halve_patience,
                              tcfg.early_stop_patience);

  TrainResult result;
  result.best = ModelCheckpoint::from_network(net);
  result.best.rng_seed = tcfg.seed;
  result.best.lr = tcfg.lr;

  std::vector<std::size_t> order(train_prep.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    // deterministic shuffle per epoch
    Rng shuffle_rng = rng.derive(1000 + epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double train_loss = 0.0, val_loss = 0.0;
    try {
      std::vector<double> epoch_losses;
      epoch_losses.reserve(train_prep.size());
      for (std::size_t start = 0; start < order.size();
           start += tcfg.batch_size) {
        const std::size_t stop =
            std::min(start + tcfg.batch_size, order.size());
        std::size_t pad_frames = 0;
        for (std::size_t i = start; i < stop; ++i)
          pad_frames =
              std::max(pad_frames, train_prep[order[i]].features.cols());

        net.zero_grad();
        for (std::size_t i = start; i < stop; ++i)
          epoch_losses.push_back(utterance_loss_graph_backward(
              net, train_prep[order[i]], pad_frames, lcfg, true));

        const double inv_batch = 1.0 / double(stop - start);
        for (auto& p : params)
          for (double& g : p.grad()) g *= inv_batch;
        clip_grad_norm(params, tcfg.grad_clip_norm);
        adam_step(params, adam, adam_cfg);
      }
      train_loss = pairwise_sum(epoch_losses) / double(epoch_losses.size());

      NoGradGuard no_grad;
      std::vector<double> val_losses;
      val_losses.reserve(val_prep.size());
      for (const auto& u : val_prep)
        val_losses.push_back(utterance_loss_graph_backward(
            net, u, u.features.cols(), lcfg, false));
      val_loss = pairwise_sum(val_losses) / double(val_losses.size());
    } catch (const std::runtime_error& e) {
      // non-finite activations mid-epoch: treat as divergence and keep
      // the last good checkpoint
      std::fprintf(stderr, "training diverged at epoch %zu: %s\n", epoch,
                   e.what());
      result.epochs_run = epoch;
      result.diverged = true;
      break;
    }

    result.epochs_run = epoch;
    if (std::isnan(val_loss)) {
      // divergence: keep the last good checkpoint
      result.diverged = true;
      EpochStats stats{epoch, train_loss, val_loss, adam_cfg.lr, false};
      result.log.push_back(stats);
      break;
    }

    const auto decision = scheduler.observe(val_loss);
    EpochStats stats{epoch, train_loss, val_loss, decision.lr,
                     decision.halved};
    result.log.push_back(stats);

    if (decision.improved) {
      result.best = ModelCheckpoint::from_network(net);
      result.best.optimizer = adam;
      result.best.lr = decision.lr;
      result.best.epoch = epoch;
      result.best.rng_seed = tcfg.seed;
      result.best.best_val_loss = val_loss;
    }
    adam_cfg.lr = decision.lr;
    if (decision.stop) break;
  }
  return result;
}

std::string format_epoch_log(const std::vector<EpochStats>& log) {
  std::string out = "epoch\ttrain_loss\tval_loss\tlr\tlr_halved\n";
  char line[160];
  for (const auto& e : log) {
    std::snprintf(line, sizeof(line), "%zu\t%.17g\t%.17g\t%.17g\t%d\n",
                  e.epoch, e.train_loss, e.val_loss, e.lr, e.lr_halved ? 1 : 0);
    out += line;
  }
  return out;
}

}  // namespace senh::nn
