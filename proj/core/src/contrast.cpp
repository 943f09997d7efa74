// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/contrast.hpp"

#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {

RawSimilarities compute_raw(const TextBatch& texts, const Tensor& conditioned, bool normalize) {
  const std::size_t bt = texts.size();
  const std::size_t d = texts.sentence.dim(1);
  const std::size_t m = texts.words.dim(1);
  if (conditioned.rank() != 4 || conditioned.dim(0) != bt || conditioned.dim(2) != m + 1 ||
      conditioned.dim(3) != d) {
    throw DimensionError("compute_raw: conditioned representations " + shape_str(conditioned.shape()) +
                         " do not match " + std::to_string(bt) + " texts of " + std::to_string(m) +
                         " words, d = " + std::to_string(d));
  }
  const std::size_t bv = conditioned.dim(1);
  const Mask word_rows = texts.word_mask.reshaped({bt, 1, m});

  Tensor zc = narrow(conditioned, 2, 0, 1);  // [Bt, Bv, 1, d]
  Tensor zf = narrow(conditioned, 2, 1, m);  // [Bt, Bv, m, d]
  Tensor sentence = texts.sentence;
  Tensor words = texts.words;
  if (normalize) {
    zc = l2_normalize(zc);
    zf = l2_normalize(zf, word_rows);
    sentence = l2_normalize(sentence);
    words = l2_normalize(words, texts.word_mask);
  } else {
    words = mul(words, Tensor::from_mask(texts.word_mask.reshaped({bt, m, 1})));
  }
  const Tensor sentence_col = reshape(sentence, {bt, 1, d, 1});
  const Tensor words_t = reshape(transpose(words, 1, 2), {bt, 1, d, m});

  RawSimilarities raw;
  raw.video_sentence = reshape(matmul(zc, sentence_col), {bt, bv});
  raw.video_word = reshape(matmul(zc, words_t), {bt, bv, m});
  raw.sentence_frame = reshape(matmul(zf, sentence_col), {bt, bv, m});
  raw.frame_word = matmul(zf, words_t);
  raw.word_mask = texts.word_mask;
  return raw;
}

RawSimilarities compute_raw(const TextFeatures& text, const Tensor& z_c, const Tensor& z_f, bool normalize) {
  const std::size_t d = text.sentence.dim(0);
  const std::size_t m = text.words.dim(0);
  if (z_c.shape() != Shape{d} || z_f.shape() != Shape{m, d}) {
    throw DimensionError("compute_raw: z_c " + shape_str(z_c.shape()) + " and z_f " + shape_str(z_f.shape()) +
                         " do not match text '" + text.id + "'");
  }
  const Tensor parts[] = {reshape(z_c, {1, 1, 1, d}), reshape(z_f, {1, 1, m, d})};
  return compute_raw(TextBatch::stack(std::span(&text, 1)), concat(parts, 2), normalize);
}

}  // namespace tcmgc
