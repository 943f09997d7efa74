// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tcmgc/aggregate.hpp"
#include "tcmgc/loss.hpp"
#include "tcmgc/reorg.hpp"

namespace tcmgc {

/// Settings for training and evaluation, read from `key = value` lines.
/// `#` starts a comment. Unknown or repeated keys are rejected.
struct RunConfig {
  std::size_t d = 512;
  std::size_t d_p = 0;  // 0 means d
  std::size_t m_max = 32;
  std::size_t n_max = 12;
  double keep_rate = 0.1;
  double alpha = 0.5;
  double lambda = 100.0;
  bool normalize = true;
  std::size_t temporal_layers = 3;
  std::size_t temporal_heads = 8;
  std::size_t lva_heads = 1;
  double lr = 1e-4;
  std::size_t batch = 0;   // 0 means the whole training set
  std::size_t epochs = 5;
  std::size_t steps = 0;   // 0 means epochs x batches per epoch
  std::uint64_t seed = 0;
  std::size_t chunk_size = 0;  // evaluation texts per chunk, 0 means all
  std::size_t workers = 1;
  SdrData sdr_data = SdrData::kPositives;
  ReorgMode reorg_video_word = ReorgMode::kRemoval;
  ReorgMode reorg_sentence_frame = ReorgMode::kFusion;
  ReorgMode reorg_frame_word_words = ReorgMode::kRemoval;
  ReorgMode reorg_frame_word_frames = ReorgMode::kRemoval;
  Aggregation aggregation = Aggregation::kLsa;
  std::vector<std::string> freeze;  // parameter-name prefixes left untouched by training

  /// Keys that appeared in the parsed text.
  std::set<std::string> explicit_keys;

  bool is_explicit(const std::string& key) const { return explicit_keys.count(key) != 0; }
  std::size_t projection_dim() const { return d_p == 0 ? d : d_p; }
  ReorgConfig reorg() const;
  LossConfig loss() const;

  /// Every key with its current value, parseable by parse_config.
  std::string to_text() const;
};

/// Throws ConfigError naming `source`, the line and the key.
RunConfig parse_config(const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::string& path);

/// Cross-field checks (head divisibility, fusion needing a tail, ...).
void validate(const RunConfig& config);

}  // namespace tcmgc
