// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tcmgc/representation.hpp"
#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// The four similarity objects for every text-video pair of a grid. Word
/// positions outside `word_mask` hold 0 and must be ignored downstream.
struct RawSimilarities {
  Tensor video_sentence;  // [Bt, Bv]
  Tensor video_word;      // [Bt, Bv, m]
  Tensor sentence_frame;  // [Bt, Bv, m]
  Tensor frame_word;      // [Bt, Bv, m, m]; row = word-conditioned frame, column = word
  Mask word_mask;         // [Bt, m]

  std::size_t texts() const { return video_sentence.dim(0); }
  std::size_t videos() const { return video_sentence.dim(1); }
  std::size_t words() const { return video_word.dim(2); }
};

/// `conditioned` is the [Bt, Bv, 1 + m, d] output of condition_on_text:
/// row 0 is z^c, rows 1..m are z^f.
RawSimilarities compute_raw(const TextBatch& texts, const Tensor& conditioned, bool normalize);

/// Single pair: z_c [d], z_f [m, d]. The result has Bt = Bv = 1.
RawSimilarities compute_raw(const TextFeatures& text, const Tensor& z_c, const Tensor& z_f, bool normalize);

}  // namespace tcmgc
