// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Parameters, optimizer moments and progress counters of a training run.
/// Values are stored in double precision so reloading is bit-exact.
struct Checkpoint {
  std::string config_text;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tcmgc
