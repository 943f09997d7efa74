// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "tcmgc/aggregate.hpp"
#include "tcmgc/checkpoint.hpp"
#include "tcmgc/config.hpp"
#include "tcmgc/contrast.hpp"
#include "tcmgc/representation.hpp"
#include "tcmgc/rng.hpp"

namespace tcmgc {

struct ModelConfig {
  std::size_t d = 512;
  std::size_t d_p = 512;
  std::size_t m_max = 32;
  std::size_t n_max = 12;
  std::size_t temporal_layers = 3;
  std::size_t temporal_heads = 8;
  std::size_t lva_heads = 1;
  bool normalize = true;
  ReorgConfig reorg;
  Aggregation aggregation = Aggregation::kLsa;

  static ModelConfig from(const RunConfig& config);
};

/// Every learnable tensor of the scoring pipeline.
struct ModelParams {
  TemporalEncoderParams temporal;
  LvaParams lva;
  AggregatorParams aggregator;

  static ModelParams init(const ModelConfig& config, Rng& rng);

  /// Stable, unique names: "temporal.*", "lva.*" and "aggregate.*".
  std::vector<NamedTensor> named() const;
  /// Copies stored values into the parameters; every name must be present
  /// with a matching shape.
  void load(const Checkpoint& checkpoint);
};

/// Differentiable scores for every pair of `texts` x `videos` (raw frames).
struct Forward {
  RawSimilarities raw;
  PairScores scores;
};

Forward forward(const ModelParams& params, const ModelConfig& config, const TextBatch& texts,
                const VideoBatch& videos);

/// Raw similarity grid for every text-video pair, with no graph history.
RawSimilarities pairwise_raw(const ModelParams& params, const ModelConfig& config,
                             std::span<const TextFeatures> texts, std::span<const VideoFeatures> videos);

struct GridOptions {
  std::size_t chunk_size = 0;  // texts per chunk, 0 means all at once
  std::size_t workers = 1;
};

struct ScoreGrid {
  std::size_t texts = 0;
  std::size_t videos = 0;
  std::vector<double> final;  // texts x videos
  std::vector<double> quads;  // texts x videos x 4

  Tensor final_tensor() const { return Tensor::from({texts, videos}, final); }
  Tensor quad_tensor() const { return Tensor::from({texts, videos, 4}, quads); }
};

/// Final scores and quads for all pairs. Texts are split into chunks that
/// run on a worker pool; the result does not depend on either setting.
ScoreGrid score_grid(const ModelParams& params, const ModelConfig& config, std::span<const TextFeatures> texts,
                     std::span<const VideoFeatures> videos, const GridOptions& options = {});

}  // namespace tcmgc
