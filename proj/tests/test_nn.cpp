#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "senh/common.hpp"
#include "senh/losses.hpp"
#include "senh/nn/checkpoint.hpp"
#include "senh/nn/network.hpp"
#include "senh/nn/optim.hpp"
#include "senh/nn/tensor.hpp"
#include "senh/nn/train.hpp"

using namespace senh;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  Rng rng(seed);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

dsp::Waveform random_waveform(std::size_t n, std::uint64_t seed,
                              double amp = 0.4) {
  Rng rng(seed);
  dsp::Waveform w;
  w.samples = oracle::random_signal(n, rng, amp);
  return w;
}

std::vector<nn::Utterance> tiny_dataset(std::size_t count, std::size_t len,
                                        std::uint64_t seed) {
  std::vector<nn::Utterance> set(count);
  for (std::size_t i = 0; i < count; ++i) {
    set[i].clean = random_waveform(len, seed + 2 * i);
    auto noise = random_waveform(len, seed + 2 * i + 1, 0.2);
    set[i].mixture.samples.resize(len);
    for (std::size_t j = 0; j < len; ++j)
      set[i].mixture.samples[j] = set[i].clean.samples[j] + noise.samples[j];
  }
  return set;
}

}  // namespace

TEST_CASE("square gradient: f(w) = w^2 at w = 3 gives 6") {
  auto w = Tensor::scalar(3.0, true);
  auto loss = nn::square(w);
  loss.backward();
  CHECK(w.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("sigmoid-affine composite gradient vs central differences") {
  auto w = Tensor::from({1, 1}, {0.7}, true);
  auto b = Tensor::from({1}, {0.1}, true);
  auto x = Tensor::from({1, 1}, {1.0}, false);
  auto build = [&] { return nn::mean(nn::sigmoid(nn::affine(w, b, x))); };

  auto loss = build();
  loss.backward();
  const double analytic_w = w.grad()[0];

  const double fd = oracle::central_diff(
      [&](double wv) {
        nn::NoGradGuard guard;
        w.values()[0] = wv;
        const double out = build().item();
        return out;
      },
      0.7);
  w.values()[0] = 0.7;
  CHECK(std::abs(analytic_w - fd) <= 1e-6);
}

TEST_CASE("elementwise and reduction op gradients") {
  auto a = random_tensor({3, 4}, 1, 0.2, 1.5);
  auto b = random_tensor({3, 4}, 2, 0.3, 1.8);
  std::vector<double> c(12);
  Rng rng(3);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);

  SUBCASE("add/mul/sub chain") {
    auto rep = gradcheck::run({a, b}, [&] {
      return nn::sum(nn::mul(nn::add(a, b), nn::sub(a, b)));
    });
    CHECK(rep.max_rel_error <= 1e-6);
  }
  SUBCASE("div") {
    auto rep = gradcheck::run({a, b}, [&] { return nn::sum(nn::div(a, b)); });
    CHECK(rep.max_rel_error <= 1e-6);
  }
  SUBCASE("exp log sqrt square") {
    auto rep = gradcheck::run({a}, [&] {
      return nn::mean(nn::add(nn::exp(nn::scale(a, 0.3)),
                              nn::log(nn::sqrt(nn::square(a)))));
    });
    CHECK(rep.max_rel_error <= 1e-5);
  }
  SUBCASE("sigmoid, clamp_min, const ops") {
    auto rep = gradcheck::run({a}, [&] {
      return nn::sum(nn::sigmoid(
          nn::const_sub(c, nn::clamp_min(nn::mul_const(a, c), 0.05))));
    });
    CHECK(rep.max_rel_error <= 1e-5);
  }
  SUBCASE("dot_const and scalar_mul_const") {
    auto flat = random_tensor({12}, 4);
    auto rep = gradcheck::run({flat}, [&] {
      auto s = nn::dot_const(flat, c);
      return nn::sum(nn::scalar_mul_const(s, c));
    });
    CHECK(rep.max_rel_error <= 1e-6);
  }
  SUBCASE("prelu") {
    auto alpha = Tensor::scalar(0.25, true);
    auto rep = gradcheck::run({a, alpha}, [&] {
      return nn::sum(nn::prelu(nn::add_scalar(a, -0.8), alpha));
    });
    CHECK(rep.max_rel_error <= 1e-5);
  }
}

TEST_CASE("affine and causal conv gradients") {
  auto w = random_tensor({3, 2}, 5);
  auto b = random_tensor({3}, 6);
  auto x = random_tensor({2, 7}, 7);
  SUBCASE("affine") {
    auto rep = gradcheck::run({w, b, x}, [&] {
      return nn::mean(nn::square(nn::affine(w, b, x)));
    });
    CHECK(rep.max_rel_error <= 1e-5);
  }
  SUBCASE("conv1d dilation 1") {
    auto cw = random_tensor({3, 2, 3}, 8);
    auto rep = gradcheck::run({cw, b, x}, [&] {
      return nn::mean(nn::square(nn::causal_conv1d(cw, b, x, 1)));
    });
    CHECK(rep.max_rel_error <= 1e-5);
  }
  SUBCASE("conv1d dilation 2 with narrow") {
    auto cw = random_tensor({3, 2, 3}, 9);
    auto rep = gradcheck::run({cw, b, x}, [&] {
      return nn::mean(
          nn::square(nn::narrow_cols(nn::causal_conv1d(cw, b, x, 2), 5)));
    });
    CHECK(rep.max_rel_error <= 1e-5);
  }
}

TEST_CASE("causal conv output only sees the past") {
  auto w = random_tensor({2, 2, 3}, 10, -0.5, 0.5, false);
  auto b = random_tensor({2}, 11, -0.1, 0.1, false);
  auto x = random_tensor({2, 9}, 12, -1.0, 1.0, false);
  auto base = nn::causal_conv1d(w, b, x, 2);

  auto x2 = Tensor::from(x.shape(), x.values());
  const std::size_t t0 = 5;
  x2.values()[0 * 9 + t0] += 1.0;
  x2.values()[1 * 9 + t0] -= 0.5;
  auto mod = nn::causal_conv1d(w, b, x2, 2);

  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t t = 0; t < 9; ++t) {
      if (t < t0)
        CHECK(mod.values()[o * 9 + t] == base.values()[o * 9 + t]);
    }
}

TEST_CASE("network: zero weights give 0.5 mask and unit variance") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 5;
  cfg.hidden_channels = 4;
  cfg.n_blocks = 2;
  nn::MaskNet net(cfg);  // zero-initialized
  auto out = net.forward(random_tensor({5, 6}, 13, -2.0, 2.0, false));
  for (double w : out.wiener.values()) CHECK(w == 0.5);
  for (double lv : out.log_var.values()) CHECK(lv == 0.0);
}

TEST_CASE("network: output shapes are F x T for any T") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 9;
  cfg.hidden_channels = 8;
  cfg.n_blocks = 1;
  nn::MaskNet net(cfg, 42);
  for (std::size_t t : {1, 2, 7, 30}) {
    auto out = net.forward(random_tensor({9, t}, 14 + t, -1.0, 1.0, false));
    CHECK(out.wiener.rows() == 9);
    CHECK(out.wiener.cols() == t);
    CHECK(out.log_var.rows() == 9);
    CHECK(out.log_var.cols() == t);
    for (double w : out.wiener.values()) {
      CHECK(w > 0.0);
      CHECK(w < 1.0);
    }
  }
}

TEST_CASE("network is causal: perturbing frame t0 leaves earlier frames exact") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 7;
  cfg.hidden_channels = 6;
  cfg.n_blocks = 3;
  nn::MaskNet net(cfg, 77);

  auto feats = random_tensor({7, 20}, 15, -1.5, 1.5, false);
  auto base = net.forward(feats);

  auto feats2 = Tensor::from(feats.shape(), feats.values());
  const std::size_t t0 = 11;
  for (std::size_t f = 0; f < 7; ++f) feats2.values()[f * 20 + t0] += 0.7;
  auto mod = net.forward(feats2);

  for (std::size_t f = 0; f < 7; ++f)
    for (std::size_t t = 0; t < t0; ++t) {
      CHECK(mod.wiener.values()[f * 20 + t] ==
            base.wiener.values()[f * 20 + t]);
      CHECK(mod.log_var.values()[f * 20 + t] ==
            base.log_var.values()[f * 20 + t]);
    }
}

TEST_CASE("network rejects NaN activations with a diagnostic") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 4;
  cfg.hidden_channels = 3;
  cfg.n_blocks = 1;
  nn::MaskNet net(cfg, 5);
  auto weights = net.flat_weights();
  weights[2] = std::nan("");
  net.set_flat_weights(weights);
  CHECK_THROWS_WITH_AS(net.forward(random_tensor({4, 3}, 16, -1.0, 1.0, false)),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("full network gradcheck through every loss (micro config)") {
  nn::NetworkConfig ncfg;
  ncfg.n_freq = 9;       // fft 16
  ncfg.hidden_channels = 6;
  ncfg.n_blocks = 1;
  nn::MaskNet net(ncfg, 99);

  auto scfg = dsp::StftConfig::hann(16);
  auto clean = random_waveform(40, 31);
  auto noise = random_waveform(40, 32, 0.2);
  dsp::Waveform mix;
  mix.samples.resize(40);
  for (std::size_t i = 0; i < 40; ++i)
    mix.samples[i] = clean.samples[i] + noise.samples[i];
  auto x = dsp::stft(mix, scfg);
  auto s = dsp::stft(clean, scfg);
  REQUIRE(x.frames() == 6);
  auto feats = nn::features_tensor(nn::make_features(x));

  losses::LossConfig lcfg;
  lcfg.beta = 0.01;
  auto params = net.parameters();

  for (auto kind : {losses::LossKind::kMse, losses::LossKind::kLogPosterior,
                    losses::LossKind::kSiSdr, losses::LossKind::kHybrid}) {
    lcfg.kind = kind;
    auto rep = gradcheck::run(params, [&] {
      auto out = net.forward(feats);
      return losses::loss_graph(out.wiener, out.log_var, x, s, clean.samples,
                                lcfg);
    });
    INFO("loss kind ", losses::to_string(kind));
    CHECK(rep.max_rel_error <= 1e-4);
    CHECK(rep.checked == net.parameter_count());
  }
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  auto p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  p.grad() = {0.3, -0.7, 2.0};
  std::vector<Tensor> params{p};
  nn::AdamState state;
  nn::AdamConfig cfg;
  nn::adam_step(params, state, cfg);
  CHECK(p.values()[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
  CHECK(p.values()[1] == doctest::Approx(-2.0 + 0.001).epsilon(1e-6));
  CHECK(p.values()[2] == doctest::Approx(0.5 - 0.001).epsilon(1e-6));
  CHECK(state.step == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto p = Tensor::from({2}, {1.5, -0.25}, true);
  p.zero_grad();
  std::vector<Tensor> params{p};
  nn::AdamState state;
  nn::AdamConfig cfg;
  for (int i = 0; i < 5; ++i) nn::adam_step(params, state, cfg);
  CHECK(p.values()[0] == 1.5);
  CHECK(p.values()[1] == -0.25);
}

TEST_CASE("adam converges on a 2-d quadratic") {
  auto p = Tensor::from({2}, {3.0, -2.0}, true);
  std::vector<Tensor> params{p};
  nn::AdamState state;
  nn::AdamConfig cfg;
  cfg.lr = 0.05;
  auto loss_value = [&] {
    return 2.0 * p.values()[0] * p.values()[0] +
           0.5 * p.values()[1] * p.values()[1];
  };
  double prev = loss_value();
  int monotone_after_warmup = 0;
  for (int step = 1; step <= 100; ++step) {
    p.zero_grad();
    p.grad()[0] = 4.0 * p.values()[0];
    p.grad()[1] = 1.0 * p.values()[1];
    nn::adam_step(params, state, cfg);
    const double now = loss_value();
    if (step > 10 && now <= prev + 1e-12) ++monotone_after_warmup;
    prev = now;
  }
  CHECK(monotone_after_warmup == 90);
  CHECK(loss_value() < 0.05);
}

TEST_CASE("gradient clipping") {
  auto p = Tensor::from({2}, {0.0, 0.0}, true);
  std::vector<Tensor> params{p};

  p.grad() = {6.0, 8.0};  // norm 10
  double pre = nn::clip_grad_norm(params, 5.0);
  CHECK(pre == doctest::Approx(10.0));
  CHECK(p.grad()[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(p.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));

  p.grad() = {3.0, 0.0};  // norm 3: untouched
  pre = nn::clip_grad_norm(params, 5.0);
  CHECK(pre == doctest::Approx(3.0));
  CHECK(p.grad()[0] == 3.0);

  Rng rng(8);
  std::vector<double> g(2);
  for (auto& v : g) v = rng.uniform(-9.0, 9.0);
  p.grad() = g;
  const double norm0 = std::sqrt(g[0] * g[0] + g[1] * g[1]);
  nn::clip_grad_norm(params, 5.0);
  const double norm1 =
      std::sqrt(p.grad()[0] * p.grad()[0] + p.grad()[1] * p.grad()[1]);
  CHECK(norm1 == doctest::Approx(std::min(norm0, 5.0)).epsilon(1e-9));
}

TEST_CASE("patience scheduler: halving after 3 stagnant epochs") {
  nn::PatienceScheduler sched(0.001, 3, 10);
  auto d1 = sched.observe(5.0);
  CHECK(d1.improved);
  CHECK(d1.lr == 0.001);
  auto d2 = sched.observe(5.0);
  CHECK_FALSE(d2.improved);
  CHECK(d2.lr == 0.001);
  auto d3 = sched.observe(5.0);
  CHECK(d3.lr == 0.001);
  auto d4 = sched.observe(5.0);  // third stagnant epoch in a row
  CHECK(d4.halved);
  CHECK(d4.lr == doctest::Approx(0.0005));
  CHECK_FALSE(d4.stop);
}

TEST_CASE("patience scheduler: early stop after 10 stagnant epochs") {
  nn::PatienceScheduler sched(0.001, 3, 10);
  sched.observe(5.0);
  for (int i = 0; i < 9; ++i) {
    auto d = sched.observe(5.0);
    CHECK_FALSE(d.stop);
  }
  auto d = sched.observe(5.0);
  CHECK(d.stop);
  // two halvings happened meanwhile (epochs 4, 7, 10 -> three)
  CHECK(d.lr == doctest::Approx(0.001 / 8.0));
}

TEST_CASE("patience scheduler: improvement resets both counters") {
  nn::PatienceScheduler sched(0.01, 3, 10);
  sched.observe(5.0);
  sched.observe(5.0);
  sched.observe(5.0);
  auto d = sched.observe(4.0);  // improvement just before halving
  CHECK(d.improved);
  CHECK(d.lr == 0.01);
  sched.observe(4.5);
  sched.observe(4.5);
  auto d2 = sched.observe(4.5);
  CHECK(d2.halved);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 9;
  cfg.hidden_channels = 8;
  cfg.n_blocks = 2;
  nn::MaskNet net(cfg, 1234);

  nn::ModelCheckpoint ckpt = nn::ModelCheckpoint::from_network(net);
  ckpt.optimizer.init(net.parameter_count());
  Rng rng(55);
  for (auto& m : ckpt.optimizer.m) m = rng.uniform(-1.0, 1.0);
  for (auto& v : ckpt.optimizer.v) v = rng.uniform(0.0, 1.0);
  ckpt.optimizer.step = 17;
  ckpt.epoch = 3;
  ckpt.rng_seed = 999;
  ckpt.best_val_loss = -7.25091853114;
  ckpt.lr = 0.00025;

  const auto path = std::filesystem::temp_directory_path() / "senh_ckpt_test.bin";
  ckpt.save(path.string());
  auto loaded = nn::ModelCheckpoint::load(path.string());

  CHECK(loaded.weights == ckpt.weights);
  CHECK(loaded.optimizer.m == ckpt.optimizer.m);
  CHECK(loaded.optimizer.v == ckpt.optimizer.v);
  CHECK(loaded.optimizer.step == 17);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.rng_seed == 999);
  CHECK(loaded.best_val_loss == ckpt.best_val_loss);
  CHECK(loaded.lr == 0.00025);
  CHECK(loaded.config.n_freq == 9);

  // saving the loaded checkpoint reproduces the file byte-for-byte
  const auto path2 =
      std::filesystem::temp_directory_path() / "senh_ckpt_test2.bin";
  loaded.save(path2.string());
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // corruption is detected
  b1[b1.size() / 2] ^= 0x40;
  std::ofstream corrupt(path, std::ios::binary | std::ios::trunc);
  corrupt.write(b1.data(), long(b1.size()));
  corrupt.close();
  CHECK_THROWS_WITH_AS(nn::ModelCheckpoint::load(path.string()),
                       doctest::Contains("checksum"), std::runtime_error);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("flat weight round trip and count validation") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 5;
  cfg.hidden_channels = 4;
  cfg.n_blocks = 1;
  nn::MaskNet net(cfg, 7);
  auto w = net.flat_weights();
  CHECK(w.size() == cfg.parameter_count());
  nn::MaskNet other(cfg);
  other.set_flat_weights(w);
  CHECK(other.flat_weights() == w);
  w.pop_back();
  CHECK_THROWS_AS(other.set_flat_weights(w), std::invalid_argument);
}

TEST_CASE("mse training never touches the variance head") {
  auto train_set = tiny_dataset(4, 120, 500);
  auto val_set = tiny_dataset(2, 120, 600);
  nn::NetworkConfig ncfg;
  ncfg.n_freq = 9;
  ncfg.hidden_channels = 6;
  ncfg.n_blocks = 1;
  nn::TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 2;
  tcfg.seed = 3;
  losses::LossConfig lcfg;
  lcfg.kind = losses::LossKind::kMse;
  auto scfg = dsp::StftConfig::hann(16);

  auto result = nn::train(train_set, val_set, tcfg, lcfg, ncfg, scfg);

  // the variance head of the result equals the seed-matched init
  nn::MaskNet reference(ncfg, Rng(tcfg.seed).derive(1).next_u64());
  const auto ref_w = reference.flat_weights();
  const auto got_w = result.best.weights;
  REQUIRE(got_w.size() == ref_w.size());
  const std::size_t head = ncfg.n_freq * ncfg.hidden_channels + ncfg.n_freq;
  bool mask_head_changed = false;
  for (std::size_t i = got_w.size() - head; i < got_w.size(); ++i)
    CHECK(got_w[i] == ref_w[i]);  // var head frozen under MSE
  for (std::size_t i = got_w.size() - 2 * head; i < got_w.size() - head; ++i)
    mask_head_changed = mask_head_changed || got_w[i] != ref_w[i];
  CHECK(mask_head_changed);
}

TEST_CASE("training is deterministic and padding-safe across batch shapes") {
  // mixed utterance lengths exercise zero-padding + loss masking
  std::vector<nn::Utterance> train_set;
  for (std::size_t i = 0; i < 6; ++i) {
    auto us = tiny_dataset(1, 90 + 30 * (i % 3), 700 + i);
    train_set.push_back(us[0]);
  }
  auto val_set = tiny_dataset(2, 100, 800);

  nn::NetworkConfig ncfg;
  ncfg.n_freq = 9;
  ncfg.hidden_channels = 6;
  ncfg.n_blocks = 2;
  nn::TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 3;
  tcfg.seed = 11;
  losses::LossConfig lcfg;
  lcfg.kind = losses::LossKind::kHybrid;
  auto scfg = dsp::StftConfig::hann(16);

  auto r1 = nn::train(train_set, val_set, tcfg, lcfg, ncfg, scfg);
  auto r2 = nn::train(train_set, val_set, tcfg, lcfg, ncfg, scfg);
  CHECK(nn::format_epoch_log(r1.log) == nn::format_epoch_log(r2.log));
  CHECK(r1.best.weights == r2.best.weights);
  CHECK(r1.log.size() == 3);
  for (const auto& e : r1.log) CHECK(std::isfinite(e.val_loss));
}

TEST_CASE("divergent training aborts with the last good checkpoint") {
  auto train_set = tiny_dataset(4, 100, 900);
  auto val_set = tiny_dataset(2, 100, 950);
  nn::NetworkConfig ncfg;
  ncfg.n_freq = 9;
  ncfg.hidden_channels = 6;
  ncfg.n_blocks = 1;
  nn::TrainConfig tcfg;
  tcfg.epochs = 40;
  tcfg.batch_size = 4;
  tcfg.lr = 1e300;  // first step pushes weights past overflow
  tcfg.grad_clip_norm = 1e308;
  tcfg.seed = 2;
  losses::LossConfig lcfg;
  lcfg.kind = losses::LossKind::kLogPosterior;
  auto scfg = dsp::StftConfig::hann(16);

  auto result = nn::train(train_set, val_set, tcfg, lcfg, ncfg, scfg);
  CHECK(result.diverged);
  CHECK(result.epochs_run < 40);
  // the returned checkpoint is usable
  auto net = result.best.to_network();
  auto out = net.forward(random_tensor({9, 5}, 1, -1.0, 1.0, false));
  for (double w : out.wiener.values()) CHECK(std::isfinite(w));
}

TEST_CASE("padded forward with narrowing equals unpadded forward") {
  nn::NetworkConfig cfg;
  cfg.n_freq = 9;
  cfg.hidden_channels = 6;
  cfg.n_blocks = 2;
  nn::MaskNet net(cfg, 2024);
  auto feats = random_tensor({9, 10}, 17, -1.0, 1.0, false);

  std::vector<double> padded(9 * 14, 0.0);
  for (std::size_t f = 0; f < 9; ++f)
    for (std::size_t t = 0; t < 10; ++t)
      padded[f * 14 + t] = feats.values()[f * 10 + t];
  auto out_pad = net.forward(Tensor::from({9, 14}, std::move(padded)));
  auto narrowed = nn::narrow_cols(out_pad.wiener, 10);
  auto out = net.forward(feats);
  for (std::size_t i = 0; i < out.wiener.size(); ++i)
    CHECK(narrowed.values()[i] == out.wiener.values()[i]);
}
