// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tcmgc/contrast.hpp"
#include "tcmgc/reorg.hpp"
#include "tcmgc/representation.hpp"
#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// How the four instance-level scores are combined into the final score.
enum class Aggregation {
  kLsa,      // softmax(W q) . q with learnable W
  kMean,     // plain average
  kSoftmax,  // softmax(q) . q
};

Aggregation parse_aggregation(const std::string& text);
const char* to_string(Aggregation mode);

/// Square, bias-free mixing matrices of the aggregators, identity at init.
struct AggregatorParams {
  Tensor video_word;      // ISA on the video-word vector
  Tensor sentence_frame;  // ISA on the sentence-frame vector
  Tensor frame_in;        // Bi-ISA frame direction, over rows
  Tensor frame_out;       // Bi-ISA frame direction, over the word-level vector
  Tensor word_in;         // Bi-ISA word direction, over columns
  Tensor word_out;        // Bi-ISA word direction, over the frame-level vector
  Tensor fusion;          // LSA over the four scores

  /// Sides follow from the word count `m` and the reorganization variants.
  static AggregatorParams identity(std::size_t m, const ReorgConfig& reorg);
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;

  std::size_t isa_entries() const;     // video-word and sentence-frame
  std::size_t bi_isa_entries() const;  // the four Bi-ISA matrices
};

/// w = softmax(W softmax(s)); returns sum(w * s) over the last axis.
/// With a mask, both softmaxes skip invalid entries (a fully invalid slice
/// scores 0 when `allow_empty`).
Tensor isa(const Tensor& s, const Tensor& weight);
Tensor isa(const Tensor& s, const Tensor& weight, const Mask& mask, bool allow_empty = false);

/// Mean of the frame-then-word and word-then-frame ISA scores of [.., R, C]
/// matrices. frame_in and word_out are R x R; frame_out and word_in are C x C.
Tensor bi_isa(const Tensor& m, const Tensor& frame_in, const Tensor& frame_out, const Tensor& word_in,
              const Tensor& word_out);
Tensor bi_isa(const Tensor& m, const Tensor& frame_in, const Tensor& frame_out, const Tensor& word_in,
              const Tensor& word_out, const Mask& mask);

/// w = softmax(W q); returns sum(w * q) over the last axis.
Tensor lsa(const Tensor& q, const Tensor& weight);

/// Final score from quads [.., 4].
Tensor combine_scores(const Tensor& quads, const AggregatorParams& params, Aggregation mode);

struct PairScores {
  Tensor quads;  // [Bt, Bv, 4]: video-sentence, video-word, sentence-frame, frame-word
  Tensor final;  // [Bt, Bv]
};

PairScores aggregate_pair(const RawSimilarities& raw, const ReorgConfig& reorg, const AggregatorParams& params,
                          Aggregation mode = Aggregation::kLsa);

}  // namespace tcmgc
