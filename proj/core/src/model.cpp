// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/model.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {

ModelConfig ModelConfig::from(const RunConfig& c) {
  validate(c);
  ModelConfig m;
  m.d = c.d;
  m.d_p = c.projection_dim();
  m.m_max = c.m_max;
  m.n_max = c.n_max;
  m.temporal_layers = c.temporal_layers;
  m.temporal_heads = c.temporal_heads;
  m.lva_heads = c.lva_heads;
  m.normalize = c.normalize;
  m.reorg = c.reorg();
  m.aggregation = c.aggregation;
  return m;
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  ModelParams p;
  p.temporal = TemporalEncoderParams::init(config.d, config.n_max, config.temporal_layers, config.temporal_heads, rng);
  p.lva = LvaParams::init(config.d, config.d_p, config.lva_heads, rng);
  p.aggregator = AggregatorParams::identity(config.m_max, config.reorg);
  return p;
}

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  temporal.collect(out, "temporal.");
  lva.collect(out, "lva.");
  aggregator.collect(out, "aggregate.");
  return out;
}

void ModelParams::load(const Checkpoint& checkpoint) {
  for (auto& [name, tensor] : named()) {
    const StoredTensor* stored = checkpoint.find(name);
    if (!stored) throw FormatError(FormatError::Kind::kInconsistent, "checkpoint lacks parameter '" + name + "'");
    if (stored->shape != tensor.shape()) {
      throw DimensionError("parameter '" + name + "' is " + shape_str(tensor.shape()) + " but the checkpoint holds " +
                           shape_str(stored->shape));
    }
    Tensor target = tensor;
    std::copy(stored->values.begin(), stored->values.end(), target.mutable_data().begin());
  }
}

Forward forward(const ModelParams& params, const ModelConfig& config, const TextBatch& texts,
                const VideoBatch& videos) {
  const VideoBatch encoded = encode_temporal(videos, params.temporal);
  const Conditioned conditioned = condition_on_text(texts, encoded, params.lva);
  Forward out;
  out.raw = compute_raw(texts, conditioned.z, config.normalize);
  out.scores = aggregate_pair(out.raw, config.reorg, params.aggregator, config.aggregation);
  return out;
}

RawSimilarities pairwise_raw(const ModelParams& params, const ModelConfig& config,
                             std::span<const TextFeatures> texts, std::span<const VideoFeatures> videos) {
  NoGradGuard no_grad;
  const VideoBatch encoded = encode_temporal(VideoBatch::stack(videos), params.temporal);
  const TextBatch batch = TextBatch::stack(texts);
  return compute_raw(batch, condition_on_text(batch, encoded, params.lva).z, config.normalize);
}

ScoreGrid score_grid(const ModelParams& params, const ModelConfig& config, std::span<const TextFeatures> texts,
                     std::span<const VideoFeatures> videos, const GridOptions& options) {
  NoGradGuard no_grad;
  const std::size_t bt = texts.size();
  const std::size_t bv = videos.size();
  const VideoBatch encoded = encode_temporal(VideoBatch::stack(videos), params.temporal);
  const TextBatch all_texts = TextBatch::stack(texts);

  const std::size_t chunk = options.chunk_size == 0 ? bt : std::min(options.chunk_size, bt);
  const std::size_t chunks = (bt + chunk - 1) / chunk;
  ScoreGrid grid;
  grid.texts = bt;
  grid.videos = bv;
  grid.final.assign(bt * bv, 0.0);
  grid.quads.assign(bt * bv * 4, 0.0);

  // Each chunk writes its own rows, so the merge order is fixed by construction.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(chunks);
  auto work = [&] {
    NoGradGuard worker_no_grad;
    for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
      try {
        const std::size_t begin = c * chunk;
        const std::size_t count = std::min(chunk, bt - begin);
        const TextBatch part = all_texts.slice(begin, count);
        const Conditioned conditioned = condition_on_text(part, encoded, params.lva);
        const RawSimilarities raw = compute_raw(part, conditioned.z, config.normalize);
        const PairScores scores = aggregate_pair(raw, config.reorg, params.aggregator, config.aggregation);
        std::copy(scores.final.data().begin(), scores.final.data().end(),
                  grid.final.begin() + static_cast<std::ptrdiff_t>(begin * bv));
        std::copy(scores.quads.data().begin(), scores.quads.data().end(),
                  grid.quads.begin() + static_cast<std::ptrdiff_t>(begin * bv * 4));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, chunks));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return grid;
}

}  // namespace tcmgc
