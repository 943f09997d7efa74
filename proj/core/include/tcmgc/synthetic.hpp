// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "tcmgc/archive.hpp"

namespace tcmgc {

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t pairs = 64;
  std::size_t d = 32;
  std::size_t m_max = 8;
  std::size_t n_max = 4;
  double noise = 0.1;
};

struct SyntheticCorpus {
  EmbeddingArchive texts;
  EmbeddingArchive videos;
};

/// Each pair draws a latent from N(0, I); the sentence, every valid word row
/// and every valid frame row are that latent plus independent noise * N(0, I).
/// Valid lengths are uniform on [ceil(max / 2), max]; padded rows are zero.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace tcmgc
