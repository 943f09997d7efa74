// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "tcmgc/rng.hpp"
#include "tcmgc/tensor.hpp"

namespace tcmgc {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// One caption: sentence vector [d] and word rows [m_max, d]. Rows at or
/// beyond `valid_words` are padding.
struct TextFeatures {
  std::string id;
  Tensor sentence;
  Tensor words;
  std::size_t valid_words = 1;
};

/// One clip: frame rows [n_max, d]; rows at or beyond `valid_frames` are padding.
struct VideoFeatures {
  std::string id;
  Tensor frames;
  std::size_t valid_frames = 1;
};

/// Stacked captions. sentence [B, d], words [B, m, d], word_mask [B, m].
struct TextBatch {
  Tensor sentence;
  Tensor words;
  Mask word_mask;
  std::vector<std::size_t> valid_words;

  static TextBatch stack(std::span<const TextFeatures> texts);
  std::size_t size() const { return valid_words.size(); }
  TextBatch slice(std::size_t begin, std::size_t count) const;
};

/// Stacked clips. frames [B, n, d], frame_mask [B, n].
struct VideoBatch {
  Tensor frames;
  Mask frame_mask;
  std::vector<std::size_t> valid_frames;

  static VideoBatch stack(std::span<const VideoFeatures> videos);
  std::size_t size() const { return valid_frames.size(); }
  VideoBatch slice(std::size_t begin, std::size_t count) const;
};

struct LinearParams {
  Tensor weight;  // [in, out]; y = x W + b
  Tensor bias;    // [out], undefined when the layer has none
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct EncoderLayerParams {
  LinearParams query, key, value, output;
  LayerNormParams attn_norm;
  LinearParams ff_in, ff_out;
  LayerNormParams ff_norm;
};

/// Post-norm transformer encoder over frames with a learned position table.
struct TemporalEncoderParams {
  Tensor position;  // [n_max, d]
  std::vector<EncoderLayerParams> layers;
  std::size_t heads = 8;

  static TemporalEncoderParams init(std::size_t d, std::size_t n_max, std::size_t layers,
                                    std::size_t heads, Rng& rng);
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

/// Language-video cross attention. The sentence and word paths share the
/// projections and the per-stage layer-norm affines.
struct LvaParams {
  Tensor w_q, w_k, w_v;  // [d, d_p]
  Tensor w_o;            // [d_p, d]
  LinearParams fc;       // [d, d] with bias
  LayerNormParams query_norm, kv_norm, out_norm, final_norm;
  std::size_t heads = 1;

  static LvaParams init(std::size_t d, std::size_t d_p, std::size_t heads, Rng& rng);
  std::size_t dim() const { return w_q.dim(0); }
  std::size_t projection_dim() const { return w_q.dim(1); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

/// frames [B, n, d] with frame_mask [B, n] -> [B, n, d]. Padded rows pass
/// through unchanged and never act as attention keys.
Tensor encode_temporal(const Tensor& frames, const Mask& frame_mask, const TemporalEncoderParams& params);
VideoBatch encode_temporal(const VideoBatch& videos, const TemporalEncoderParams& params);
VideoFeatures encode_temporal(const VideoFeatures& video, const TemporalEncoderParams& params);

struct Conditioned {
  /// Conditioned representations [Bt, Bv, Q, d]; invalid query rows are zero.
  Tensor z;
  /// Attention weights over frames [Bt, Bv, heads, Q, n].
  Tensor attention;
};

/// Cross attention of text queries [Bt, Q, d] (query_mask [Bt, Q]) over
/// encoded frames [Bv, n, d] (frame_mask [Bv, n]) for every text-video pair.
Conditioned attend(const Tensor& queries, const Mask& query_mask, const Tensor& frames,
                   const Mask& frame_mask, const LvaParams& params);

/// Query row 0 is the sentence (z^c); rows 1..m are the words (z^f).
Conditioned condition_on_text(const TextBatch& texts, const VideoBatch& encoded, const LvaParams& params);

/// Sentence-conditioned video vector [d] for one pair.
Tensor sentence_conditioned_video(const TextFeatures& text, const VideoFeatures& encoded,
                                  const LvaParams& params);
/// Word-conditioned frame rows [m_max, d] for one pair; padded word rows are zero.
Tensor word_conditioned_frames(const TextFeatures& text, const VideoFeatures& encoded,
                               const LvaParams& params);

}  // namespace tcmgc
