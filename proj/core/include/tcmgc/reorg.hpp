// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

enum class ReorgMode {
  kNone,     // keep every entry in place
  kRemoval,  // keep the k largest, drop the rest
  kFusion,   // keep the k largest and blend the rest into one trailing entry
};

ReorgMode parse_reorg_mode(const std::string& text);
const char* to_string(ReorgMode mode);

/// max(1, floor(m * r)). Throws ConfigError unless 0 < r <= 1, BoundsError if m == 0.
std::size_t keep_count(std::size_t m, double keep_rate);

/// Length of the reorganized axis for an input extent of `m`.
std::size_t reorganized_extent(std::size_t m, std::size_t k, ReorgMode mode);

/// Keep rate and variant for each granularity. The frame-word matrix is
/// reorganized per row over words first, then per column over frames.
struct ReorgConfig {
  double keep_rate = 0.1;
  ReorgMode video_word = ReorgMode::kRemoval;
  ReorgMode sentence_frame = ReorgMode::kFusion;
  ReorgMode frame_word_words = ReorgMode::kRemoval;
  ReorgMode frame_word_frames = ReorgMode::kRemoval;
};

struct Reorganized {
  Tensor values;
  Mask valid;
  /// Selected slots that had to be filled with invalid entries.
  std::size_t pad_selected = 0;
  /// Input positions of the kept entries along the reorganized axis, in
  /// output order. Empty when nothing was selected (mode none).
  IndexTensor selected;
  /// bi_sr only: column positions kept by the per-row stage. `selected`
  /// then indexes rows of the stage-one matrix.
  IndexTensor first_stage;
};

/// Reorganizes every slice of `x` along `axis`. `mask` broadcasts to x.
/// Selected entries come out in descending order, ties to the lower index;
/// invalid entries are only selected once the valid ones run out. A fused
/// entry is softmax(tail) . tail over the valid tail entries, and is itself
/// invalid when the tail has none. Fully invalid slices throw
/// DegenerateError unless `allow_empty`.
Reorganized reorganize(const Tensor& x, const Mask& mask, int axis, std::size_t k, ReorgMode mode,
                       bool allow_empty = false);

/// Removal along the last axis: the k largest valid entries.
Reorganized sr_video_word(const Tensor& v, const Mask& mask, std::size_t k);
/// Fusion along the last axis: k largest, then one fused tail entry. Requires k < extent.
Reorganized sr_sentence_frame(const Tensor& v, const Mask& mask, std::size_t k);

/// Two-stage reorganization of [.., R, C] matrices: per row over columns
/// (word direction) using `col_mask`, then per column over rows (frame
/// direction) using `row_mask` combined with stage-one validity.
/// `row_mask` broadcasts to [.., R, 1] and `col_mask` to [.., 1, C].
Reorganized bi_sr(const Tensor& m, const Mask& row_mask, const Mask& col_mask, std::size_t k_cols,
                  ReorgMode col_mode, std::size_t k_rows, ReorgMode row_mode);

/// Bidirectional removal with k rows and k columns kept.
Reorganized bi_sr_frame_word(const Tensor& m, const Mask& row_mask, const Mask& col_mask, std::size_t k);

}  // namespace tcmgc
