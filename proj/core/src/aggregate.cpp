// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/aggregate.hpp"

#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {

namespace {

Tensor identity_matrix(std::size_t side) {
  std::vector<double> values(side * side, 0.0);
  for (std::size_t i = 0; i < side; ++i) values[i * side + i] = 1.0;
  return Tensor::from({side, side}, std::move(values), true);
}

void check_square(const Tensor& w, std::size_t side, const char* what) {
  if (w.shape() != Shape{side, side}) {
    throw DimensionError(std::string(what) + ": weight " + shape_str(w.shape()) + " does not match length " +
                         std::to_string(side));
  }
}

Tensor weighted_softmax(const Tensor& x, int axis, const Mask* mask, bool allow_empty) {
  return mask ? masked_softmax(x, axis, *mask, 1.0, allow_empty) : softmax(x, axis);
}

// x [.., L] times W^T, row by row.
Tensor mix_last(const Tensor& x, const Tensor& w) {
  const std::size_t side = x.shape().back();
  const Tensor rows = reshape(x, {x.numel() / side, side});
  return reshape(matmul(rows, transpose(w, 0, 1)), x.shape());
}

Tensor isa_impl(const Tensor& s, const Tensor& weight, const Mask* mask, bool allow_empty) {
  if (s.rank() == 0) throw DimensionError("isa: scalar input");
  check_square(weight, s.shape().back(), "isa");
  const Tensor relevance = weighted_softmax(s, -1, mask, allow_empty);
  const Tensor w = weighted_softmax(mix_last(relevance, weight), -1, mask, allow_empty);
  return sum(mul(w, s), -1);
}

Mask any_along(const Mask& mask, int axis) {
  const Shape& s = mask.shape();
  const std::size_t ax = normalize_axis(axis, s.size());
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= s[d];
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<std::uint8_t> out(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < s[ax]; ++j) {
      for (std::size_t i = 0; i < inner; ++i) {
        if (mask.data()[(o * s[ax] + j) * inner + i]) out[o * inner + i] = 1;
      }
    }
  }
  return Mask(std::move(out_shape), std::move(out));
}

Tensor bi_isa_impl(const Tensor& m, const Tensor& frame_in, const Tensor& frame_out, const Tensor& word_in,
                   const Tensor& word_out, const Mask* mask) {
  if (m.rank() < 2) throw DimensionError("bi_isa: expected a matrix, got " + shape_str(m.shape()));
  const std::size_t rows = m.dim(-2);
  const std::size_t cols = m.dim(-1);
  check_square(frame_in, rows, "bi_isa frame_in");
  check_square(frame_out, cols, "bi_isa frame_out");
  check_square(word_in, cols, "bi_isa word_in");
  check_square(word_out, rows, "bi_isa word_out");
  Mask full;
  if (mask) full = broadcast_mask(*mask, m.shape());
  const Mask* fm = mask ? &full : nullptr;

  // Frame direction: weigh rows within each column, giving one score per word.
  const Tensor p_rows = weighted_softmax(m, -2, fm, true);
  const Tensor w_rows = weighted_softmax(matmul(frame_in, p_rows), -2, fm, true);
  const Tensor word_level = sum(mul(w_rows, m), -2);
  // Word direction: weigh columns within each row, giving one score per frame.
  const Tensor p_cols = weighted_softmax(m, -1, fm, true);
  const Tensor w_cols = weighted_softmax(mix_last(p_cols, word_in), -1, fm, true);
  const Tensor frame_level = sum(mul(w_cols, m), -1);

  Tensor frame_then_word, word_then_frame;
  if (mask) {
    const Mask word_valid = any_along(full, -2);
    const Mask frame_valid = any_along(full, -1);
    frame_then_word = isa_impl(word_level, frame_out, &word_valid, true);
    word_then_frame = isa_impl(frame_level, word_out, &frame_valid, true);
  } else {
    frame_then_word = isa_impl(word_level, frame_out, nullptr, false);
    word_then_frame = isa_impl(frame_level, word_out, nullptr, false);
  }
  return scale(add(frame_then_word, word_then_frame), 0.5);
}

}  // namespace

Aggregation parse_aggregation(const std::string& text) {
  if (text == "lsa") return Aggregation::kLsa;
  if (text == "mean") return Aggregation::kMean;
  if (text == "softmax") return Aggregation::kSoftmax;
  throw ConfigError("unknown aggregation '" + text + "' (expected lsa, mean or softmax)");
}

const char* to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::kLsa:
      return "lsa";
    case Aggregation::kMean:
      return "mean";
    case Aggregation::kSoftmax:
      return "softmax";
  }
  return "lsa";
}

AggregatorParams AggregatorParams::identity(std::size_t m, const ReorgConfig& reorg) {
  const std::size_t k = keep_count(m, reorg.keep_rate);
  const std::size_t rows = reorganized_extent(m, k, reorg.frame_word_frames);
  const std::size_t cols = reorganized_extent(m, k, reorg.frame_word_words);
  AggregatorParams p;
  p.video_word = identity_matrix(reorganized_extent(m, k, reorg.video_word));
  p.sentence_frame = identity_matrix(reorganized_extent(m, k, reorg.sentence_frame));
  p.frame_in = identity_matrix(rows);
  p.frame_out = identity_matrix(cols);
  p.word_in = identity_matrix(cols);
  p.word_out = identity_matrix(rows);
  p.fusion = identity_matrix(4);
  return p;
}

void AggregatorParams::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "video_word", video_word});
  out.push_back({prefix + "sentence_frame", sentence_frame});
  out.push_back({prefix + "frame_in", frame_in});
  out.push_back({prefix + "frame_out", frame_out});
  out.push_back({prefix + "word_in", word_in});
  out.push_back({prefix + "word_out", word_out});
  out.push_back({prefix + "fusion", fusion});
}

std::size_t AggregatorParams::isa_entries() const { return video_word.numel() + sentence_frame.numel(); }

std::size_t AggregatorParams::bi_isa_entries() const {
  return frame_in.numel() + frame_out.numel() + word_in.numel() + word_out.numel();
}

Tensor isa(const Tensor& s, const Tensor& weight) { return isa_impl(s, weight, nullptr, false); }

Tensor isa(const Tensor& s, const Tensor& weight, const Mask& mask, bool allow_empty) {
  return isa_impl(s, weight, &mask, allow_empty);
}

Tensor bi_isa(const Tensor& m, const Tensor& frame_in, const Tensor& frame_out, const Tensor& word_in,
              const Tensor& word_out) {
  return bi_isa_impl(m, frame_in, frame_out, word_in, word_out, nullptr);
}

Tensor bi_isa(const Tensor& m, const Tensor& frame_in, const Tensor& frame_out, const Tensor& word_in,
              const Tensor& word_out, const Mask& mask) {
  return bi_isa_impl(m, frame_in, frame_out, word_in, word_out, &mask);
}

Tensor lsa(const Tensor& q, const Tensor& weight) {
  if (q.rank() == 0) throw DimensionError("lsa: scalar input");
  check_square(weight, q.shape().back(), "lsa");
  const Tensor w = softmax(mix_last(q, weight), -1);
  return sum(mul(w, q), -1);
}

Tensor combine_scores(const Tensor& quads, const AggregatorParams& params, Aggregation mode) {
  switch (mode) {
    case Aggregation::kLsa:
      return lsa(quads, params.fusion);
    case Aggregation::kMean:
      return mean(quads, -1);
    case Aggregation::kSoftmax:
      return sum(mul(softmax(quads, -1), quads), -1);
  }
  throw ConfigError("unknown aggregation mode");
}

PairScores aggregate_pair(const RawSimilarities& raw, const ReorgConfig& reorg, const AggregatorParams& params,
                          Aggregation mode) {
  const std::size_t bt = raw.texts();
  const std::size_t bv = raw.videos();
  const std::size_t m = raw.words();
  const std::size_t k = keep_count(m, reorg.keep_rate);
  const Mask word_mask = raw.word_mask.reshaped({bt, 1, m});

  const Reorganized vw = reorganize(raw.video_word, word_mask, -1, k, reorg.video_word);
  const Reorganized sf = reorganize(raw.sentence_frame, word_mask, -1, k, reorg.sentence_frame);
  const Reorganized fw = bi_sr(raw.frame_word, raw.word_mask.reshaped({bt, 1, m, 1}),
                               raw.word_mask.reshaped({bt, 1, 1, m}), k, reorg.frame_word_words, k,
                               reorg.frame_word_frames);

  const Tensor parts[] = {
      reshape(raw.video_sentence, {bt, bv, 1}),
      reshape(isa(vw.values, params.video_word, vw.valid), {bt, bv, 1}),
      reshape(isa(sf.values, params.sentence_frame, sf.valid), {bt, bv, 1}),
      reshape(bi_isa(fw.values, params.frame_in, params.frame_out, params.word_in, params.word_out, fw.valid),
              {bt, bv, 1}),
  };
  PairScores out;
  out.quads = concat(parts, 2);
  out.final = combine_scores(out.quads, params, mode);
  return out;
}

}  // namespace tcmgc
