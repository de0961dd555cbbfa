#include "senh/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "senh/common.hpp"

namespace senh::nn {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'N', 'H', 'C', 'K', 'P', '1'};

void append_u64(std::string& buf, std::uint64_t v) {
  char raw[8];
  std::memcpy(raw, &v, 8);
  buf.append(raw, 8);
}

void append_doubles(std::string& buf, const std::vector<double>& xs) {
  append_u64(buf, xs.size());
  buf.append(reinterpret_cast<const char*>(xs.data()), xs.size() * 8);
}

std::uint64_t read_u64(const std::string& buf, std::size_t& pos) {
  if (pos + 8 > buf.size())
    throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v;
  std::memcpy(&v, buf.data() + pos, 8);
  pos += 8;
  return v;
}

std::vector<double> read_doubles(const std::string& buf, std::size_t& pos) {
  const std::uint64_t n = read_u64(buf, pos);
  if (pos + n * 8 > buf.size())
    throw std::runtime_error("checkpoint: truncated payload");
  std::vector<double> xs(n);
  std::memcpy(xs.data(), buf.data() + pos, n * 8);
  pos += n * 8;
  return xs;
}

}  // namespace

void ModelCheckpoint::validate() const {
  config.validate();
  if (weights.size() != config.parameter_count())
    throw std::invalid_argument(
        "checkpoint: weight count does not match network config");
  if (!optimizer.m.empty() && (optimizer.m.size() != weights.size() ||
                               optimizer.v.size() != weights.size()))
    throw std::invalid_argument("checkpoint: optimizer state size mismatch");
}

void ModelCheckpoint::save(const std::string& path) const {
  validate();
  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["network"] = {
      {"n_freq", config.n_freq},
      {"hidden_channels", config.hidden_channels},
      {"n_blocks", config.n_blocks},
      {"kernel", config.kernel},
      {"dilation_base", config.dilation_base},
      {"causal", config.causal},
  };
  meta["train"] = {
      {"epoch", epoch},
      {"rng_seed", rng_seed},
      {"best_val_loss", best_val_loss},
      {"lr", lr},
      {"adam_step", optimizer.step},
  };
  meta["features"] = {
      {"kind", "log_magnitude"},
      {"normalization", "per_utterance_mean_std"},
      {"log_eps", kMagnitudeFloor},
  };
  const std::string json_text = meta.dump();

  std::string buf(kMagic, 8);
  append_u64(buf, json_text.size());
  buf += json_text;
  append_doubles(buf, weights);
  append_doubles(buf, optimizer.m);
  append_doubles(buf, optimizer.v);

  const std::uint32_t crc = crc32(
      {reinterpret_cast<const unsigned char*>(buf.data()), buf.size()});
  char raw[4];
  std::memcpy(raw, &crc, 4);
  buf.append(raw, 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(buf.data(), long(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

ModelCheckpoint ModelCheckpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  const std::uint32_t actual_crc = crc32(
      {reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4});
  if (stored_crc != actual_crc)
    throw std::runtime_error("checkpoint: checksum mismatch in " + path);

  std::size_t pos = 8;
  const std::uint64_t json_len = read_u64(buf, pos);
  if (pos + json_len > buf.size())
    throw std::runtime_error("checkpoint: truncated config block");
  const auto meta = nlohmann::json::parse(buf.substr(pos, json_len));
  pos += json_len;

  ModelCheckpoint ckpt;
  const auto& net = meta.at("network");
  ckpt.config.n_freq = net.at("n_freq").get<std::size_t>();
  ckpt.config.hidden_channels = net.at("hidden_channels").get<std::size_t>();
  ckpt.config.n_blocks = net.at("n_blocks").get<std::size_t>();
  ckpt.config.kernel = net.at("kernel").get<std::size_t>();
  ckpt.config.dilation_base = net.at("dilation_base").get<std::size_t>();
  ckpt.config.causal = net.at("causal").get<bool>();
  const auto& train = meta.at("train");
  ckpt.epoch = train.at("epoch").get<std::size_t>();
  ckpt.rng_seed = train.at("rng_seed").get<std::uint64_t>();
  ckpt.best_val_loss = train.at("best_val_loss").get<double>();
  ckpt.lr = train.at("lr").get<double>();
  ckpt.optimizer.step = train.at("adam_step").get<std::uint64_t>();

  ckpt.weights = read_doubles(buf, pos);
  ckpt.optimizer.m = read_doubles(buf, pos);
  ckpt.optimizer.v = read_doubles(buf, pos);
  if (pos + 4 != buf.size())
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  ckpt.validate();
  return ckpt;
}

MaskNet ModelCheckpoint::to_network() const {
  validate();
  MaskNet net(config);
  net.set_flat_weights(weights);
  return net;
}

ModelCheckpoint ModelCheckpoint::from_network(const MaskNet& net) {
  ModelCheckpoint ckpt;
  ckpt.config = net.config();
  ckpt.weights = net.flat_weights();
  return ckpt;
}

}  // namespace senh::nn
