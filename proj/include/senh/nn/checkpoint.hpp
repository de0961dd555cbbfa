// Versioned binary checkpoint: JSON config block, raw little-endian
// float64 weight and optimizer payloads, CRC-32 trailer.
#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "senh/nn/network.hpp"
#include "senh/nn/optim.hpp"

namespace senh::nn {

struct ModelCheckpoint {
  NetworkConfig config;
  std::vector<double> weights;  // flat, MaskNet parameter order
  AdamState optimizer;
  double lr = 0.001;
  std::size_t epoch = 0;
  std::uint64_t rng_seed = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();

  void validate() const;  // weight count must match the config

  // Serialization round-trips bit-exactly; load verifies the checksum.
  void save(const std::string& path) const;
  static ModelCheckpoint load(const std::string& path);

  MaskNet to_network() const;
  static ModelCheckpoint from_network(const MaskNet& net);
};

}  // namespace senh::nn
