// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcmgc/archive.hpp"
#include "tcmgc/checkpoint.hpp"
#include "tcmgc/config.hpp"
#include "tcmgc/model.hpp"
#include "tcmgc/optim.hpp"
#include "tcmgc/rng.hpp"

namespace tcmgc {

/// Fills d, m_max and n_max from the archives unless the config set them;
/// an explicit value that disagrees with the data throws DimensionError.
RunConfig adopt_dimensions(RunConfig config, const EmbeddingArchive& texts, const EmbeddingArchive& videos);

struct StepStats {
  std::uint64_t step = 0;  // 1-based index of the update just applied
  double lr = 0;
  double infonce = 0;
  double sdr = 0;
  double total = 0;
};

/// `step 12 lr 9.8e-05 infonce 4.1 sdr 0.01 total 4.1` style log line.
std::string format_step(const StepStats& stats);

/// Adam optimization of every non-frozen parameter against the total loss.
/// Full-batch unless the config sets a batch size; mini-batches are drawn
/// from a per-epoch shuffle.
class Trainer {
 public:
  /// `videos[i]` must be the match of `texts[i]`.
  Trainer(RunConfig config, std::vector<TextFeatures> texts, std::vector<VideoFeatures> videos);

  const RunConfig& config() const { return config_; }
  const ModelConfig& model_config() const { return model_config_; }
  const ModelParams& params() const { return params_; }
  const std::vector<NamedTensor>& trainable() const { return trainable_; }

  std::uint64_t step() const { return adam_.step; }
  std::uint64_t total_steps() const { return total_steps_; }
  std::size_t batch_size() const { return batch_size_; }
  bool done() const { return adam_.step >= total_steps_; }

  /// One update. Throws NumericalError if the loss is not finite.
  StepStats step_once();
  /// Steps until total_steps(), reporting each one.
  void run(const std::function<void(const StepStats&)>& on_step = {});

  /// Final-score grid of the most recent batch, before its update.
  const Tensor& last_scores() const { return last_scores_; }

  Checkpoint checkpoint() const;
  /// Resumes from a checkpoint written by a trainer with the same config and data.
  void restore(const Checkpoint& checkpoint);

 private:
  void begin_epoch();

  RunConfig config_;
  ModelConfig model_config_;
  std::vector<TextFeatures> texts_;
  std::vector<VideoFeatures> videos_;
  TextBatch full_texts_;
  VideoBatch full_videos_;
  ModelParams params_;
  std::vector<NamedTensor> trainable_;
  std::vector<Tensor> trainable_tensors_;
  AdamState adam_;
  Rng rng_;
  std::string epoch_rng_state_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_ = 0;
  std::size_t steps_per_epoch_ = 1;
  std::uint64_t total_steps_ = 0;
  Tensor last_scores_;
};

}  // namespace tcmgc
