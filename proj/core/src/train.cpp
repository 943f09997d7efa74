// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "tcmgc/autograd.hpp"
#include "tcmgc/error.hpp"
#include "tcmgc/loss.hpp"

namespace tcmgc {

namespace {

void adopt(RunConfig& config, const char* key, std::size_t RunConfig::*member, std::size_t actual) {
  if (config.is_explicit(key) && config.*member != actual) {
    throw DimensionError(std::string("config ") + key + " = " + std::to_string(config.*member) +
                         " but the archives have " + key + " = " + std::to_string(actual));
  }
  config.*member = actual;
}

bool frozen(const RunConfig& config, const std::string& name) {
  for (const auto& prefix : config.freeze) {
    if (name.compare(0, prefix.size(), prefix) == 0) return true;
  }
  return false;
}

}  // namespace

RunConfig adopt_dimensions(RunConfig config, const EmbeddingArchive& texts, const EmbeddingArchive& videos) {
  if (texts.d != videos.d) {
    throw DimensionError("text d = " + std::to_string(texts.d) + " but video d = " + std::to_string(videos.d));
  }
  adopt(config, "d", &RunConfig::d, texts.d);
  adopt(config, "m_max", &RunConfig::m_max, texts.max_len);
  adopt(config, "n_max", &RunConfig::n_max, videos.max_len);
  return config;
}

std::string format_step(const StepStats& s) {
  char line[160];
  std::snprintf(line, sizeof line, "step %llu lr %.6e infonce %.9f sdr %.9f total %.9f",
                static_cast<unsigned long long>(s.step), s.lr, s.infonce, s.sdr, s.total);
  return line;
}

Trainer::Trainer(RunConfig config, std::vector<TextFeatures> texts, std::vector<VideoFeatures> videos)
    : config_(std::move(config)),
      model_config_(ModelConfig::from(config_)),
      texts_(std::move(texts)),
      videos_(std::move(videos)),
      rng_(config_.seed) {
  if (texts_.empty() || texts_.size() != videos_.size()) {
    throw PairingError(std::to_string(texts_.size()) + " texts cannot pair with " + std::to_string(videos_.size()) +
                       " videos");
  }
  full_texts_ = TextBatch::stack(texts_);
  full_videos_ = VideoBatch::stack(videos_);
  if (full_texts_.sentence.dim(1) != model_config_.d || full_texts_.words.dim(1) != model_config_.m_max ||
      full_videos_.frames.dim(1) != model_config_.n_max) {
    throw DimensionError("training data does not match config d = " + std::to_string(model_config_.d) +
                         ", m_max = " + std::to_string(model_config_.m_max) +
                         ", n_max = " + std::to_string(model_config_.n_max));
  }

  params_ = ModelParams::init(model_config_, rng_);
  for (auto& entry : params_.named()) {
    const bool train = !frozen(config_, entry.name);
    entry.tensor.set_requires_grad(train);
    if (train) {
      trainable_.push_back(entry);
      trainable_tensors_.push_back(entry.tensor);
    }
  }

  const std::size_t n = texts_.size();
  batch_size_ = config_.batch == 0 ? n : std::min(config_.batch, n);
  steps_per_epoch_ = (n + batch_size_ - 1) / batch_size_;
  total_steps_ = config_.steps != 0 ? config_.steps : config_.epochs * steps_per_epoch_;
  adam_.base_lr = config_.lr;
  adam_.horizon = total_steps_;
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

void Trainer::begin_epoch() {
  epoch_rng_state_ = rng_.state();
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (batch_size_ == texts_.size()) return;
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
}

StepStats Trainer::step_once() {
  if (done()) throw ContractError("training already reached its step budget");
  const std::uint64_t position = adam_.step % steps_per_epoch_;
  if (position == 0) begin_epoch();

  TextBatch texts;
  VideoBatch videos;
  if (batch_size_ == texts_.size()) {
    texts = full_texts_;
    videos = full_videos_;
  } else {
    const std::size_t begin = position * batch_size_;
    const std::size_t end = std::min(begin + batch_size_, order_.size());
    std::vector<TextFeatures> bt;
    std::vector<VideoFeatures> bv;
    for (std::size_t i = begin; i < end; ++i) {
      bt.push_back(texts_[order_[i]]);
      bv.push_back(videos_[order_[i]]);
    }
    texts = TextBatch::stack(bt);
    videos = VideoBatch::stack(bv);
  }

  const Forward out = forward(params_, model_config_, texts, videos);
  const LossTerms terms = total_loss(out.scores.final, out.scores.quads, config_.loss());
  StepStats stats;
  stats.step = adam_.step + 1;
  stats.infonce = terms.infonce.item();
  stats.sdr = terms.sdr.item();
  stats.total = terms.total.item();
  if (!std::isfinite(stats.total)) {
    throw NumericalError("training diverged at step " + std::to_string(stats.step) + "; last finite step was " +
                         std::to_string(adam_.step));
  }
  last_scores_ = out.scores.final.detach();

  for (auto& t : trainable_tensors_) t.zero_grad();
  backward(terms.total);
  stats.lr = adam_step(trainable_tensors_, adam_);
  return stats;
}

void Trainer::run(const std::function<void(const StepStats&)>& on_step) {
  while (!done()) {
    const StepStats stats = step_once();
    if (on_step) on_step(stats);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = config_.to_text();
  c.step = adam_.step;
  c.epoch = adam_.step / steps_per_epoch_;
  // Mid-epoch the shuffle is replayed from the state the epoch started with.
  c.rng_state = adam_.step % steps_per_epoch_ == 0 ? rng_.state() : epoch_rng_state_;
  for (const auto& [name, tensor] : params_.named()) {
    c.tensors.push_back({name, tensor.shape(), std::vector<double>(tensor.data().begin(), tensor.data().end())});
  }
  if (!adam_.first.empty()) {
    for (std::size_t i = 0; i < trainable_.size(); ++i) {
      const Shape& shape = trainable_[i].tensor.shape();
      c.tensors.push_back({"adam.m/" + trainable_[i].name, shape, adam_.first[i]});
      c.tensors.push_back({"adam.v/" + trainable_[i].name, shape, adam_.second[i]});
    }
  }
  return c;
}

void Trainer::restore(const Checkpoint& checkpoint) {
  params_.load(checkpoint);
  adam_.step = checkpoint.step;
  adam_.first.clear();
  adam_.second.clear();
  if (!trainable_.empty() && checkpoint.find("adam.m/" + trainable_.front().name)) {
    for (const auto& entry : trainable_) {
      const StoredTensor* m = checkpoint.find("adam.m/" + entry.name);
      const StoredTensor* v = checkpoint.find("adam.v/" + entry.name);
      if (!m || !v || m->values.size() != entry.tensor.numel() || v->values.size() != entry.tensor.numel()) {
        throw FormatError(FormatError::Kind::kInconsistent, "checkpoint optimizer state for '" + entry.name +
                                                                "' is missing or malformed");
      }
      adam_.first.push_back(m->values);
      adam_.second.push_back(v->values);
    }
  }
  rng_.restore(checkpoint.rng_state);
  const std::uint64_t position = adam_.step % steps_per_epoch_;
  if (position != 0) begin_epoch();
}

}  // namespace tcmgc
