// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"
#include "tcmgc/representation.hpp"

namespace tcmgc {
namespace {

using testing::random_text;
using testing::random_tensor;
using testing::random_video;

constexpr double kEps = 1e-5;

// Plain-vector reference of one conditioned query row.
using Vec = std::vector<double>;

Vec layer_norm_ref(const Vec& x, const Tensor& gamma, const Tensor& beta) {
  double mu = 0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mu) / std::sqrt(var + kEps) * gamma.data()[i] + beta.data()[i];
  }
  return out;
}

Vec vec_mat(const Vec& x, const Tensor& w) {
  const std::size_t cols = w.dim(1);
  Vec out(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w.at({i, j});
  return out;
}

Vec row(const Tensor& m, std::size_t r) {
  const std::size_t d = m.dim(1);
  return Vec(m.data().begin() + static_cast<std::ptrdiff_t>(r * d),
             m.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
}

Vec conditioned_ref(const Vec& query, const Tensor& frames, std::size_t valid, const LvaParams& p) {
  const Vec q = vec_mat(layer_norm_ref(query, p.query_norm.gamma, p.query_norm.beta), p.w_q);
  std::vector<Vec> keys, vals;
  for (std::size_t f = 0; f < valid; ++f) {
    const Vec norm = layer_norm_ref(row(frames, f), p.kv_norm.gamma, p.kv_norm.beta);
    keys.push_back(vec_mat(norm, p.w_k));
    vals.push_back(vec_mat(norm, p.w_v));
  }
  Vec logits(valid);
  double top = -1e300;
  for (std::size_t f = 0; f < valid; ++f) {
    double dot = 0;
    for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * keys[f][i];
    logits[f] = dot / std::sqrt(static_cast<double>(q.size()));
    top = std::max(top, logits[f]);
  }
  double z = 0;
  for (auto& l : logits) z += (l = std::exp(l - top));
  Vec pooled(q.size(), 0.0);
  for (std::size_t f = 0; f < valid; ++f)
    for (std::size_t i = 0; i < q.size(); ++i) pooled[i] += logits[f] / z * vals[f][i];
  const Vec z_hat = layer_norm_ref(vec_mat(pooled, p.w_o), p.out_norm.gamma, p.out_norm.beta);
  Vec fc = vec_mat(z_hat, p.fc.weight);
  for (std::size_t i = 0; i < fc.size(); ++i) fc[i] += p.fc.bias.data()[i] + z_hat[i];
  return layer_norm_ref(fc, p.final_norm.gamma, p.final_norm.beta);
}

void set(Tensor& t, std::vector<double> v) {
  auto out = t.mutable_data();
  ASSERT_EQ(out.size(), v.size());
  std::copy(v.begin(), v.end(), out.begin());
}

TEST(Lva, HandSetTwoFrameInstanceMatchesScalarWalkthrough) {
  Rng rng(0);
  LvaParams p = LvaParams::init(2, 2, 1, rng);
  set(p.w_q, {1.0, 0.5, -0.5, 2.0});
  set(p.w_k, {0.3, -1.0, 1.2, 0.4});
  set(p.w_v, {2.0, 0.0, 1.0, -1.0});
  set(p.w_o, {0.5, 0.5, -1.0, 1.5});
  set(p.fc.weight, {1.0, -0.25, 0.75, 0.5});
  set(p.fc.bias, {0.1, -0.2});
  set(p.kv_norm.gamma, {1.5, 0.5});
  set(p.out_norm.beta, {0.25, -0.25});
  const TextFeatures text{"t", Tensor::from({2}, {0.2, 0.9}), Tensor::from({1, 2}, {1.0, -1.0}), 1};
  const VideoFeatures video{"v", Tensor::from({2, 2}, {1.0, 2.0, -0.5, 0.3}), 2};
  const Vec expect = conditioned_ref({0.2, 0.9}, video.frames, 2, p);
  const Tensor z = sentence_conditioned_video(text, video, p);
  ASSERT_EQ(z.shape(), Shape{2});
  EXPECT_NEAR(z.at({0}), expect[0], 1e-12);
  EXPECT_NEAR(z.at({1}), expect[1], 1e-12);
}

TEST(Lva, RandomInstancesMatchReference) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 4, m = 3, n = 5;
    const LvaParams p = LvaParams::init(d, d, 1, rng);
    const std::size_t words = testing::random_size(rng, 1, m);
    const std::size_t frames = testing::random_size(rng, 1, n);
    const TextFeatures text = random_text(rng, d, m, words);
    const VideoFeatures video = random_video(rng, d, n, frames);
    const Tensor zc = sentence_conditioned_video(text, video, p);
    const Vec expect_c = conditioned_ref(testing::values(text.sentence), video.frames, frames, p);
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(zc.at({i}), expect_c[i], 1e-12);
    const Tensor zf = word_conditioned_frames(text, video, p);
    ASSERT_EQ(zf.shape(), (Shape{m, d}));
    for (std::size_t w = 0; w < m; ++w) {
      if (w >= words) {
        for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(zf.at({w, i}), 0.0);
        continue;
      }
      const Vec expect = conditioned_ref(row(text.words, w), video.frames, frames, p);
      for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(zf.at({w, i}), expect[i], 1e-12);
    }
  }
}

TEST(Lva, AttentionIsAConvexCombinationOfValidFrames) {
  Rng rng(2);
  const std::size_t d = 8, m = 4, n = 6;
  const LvaParams p = LvaParams::init(d, d, 2, rng);
  std::vector<TextFeatures> texts;
  std::vector<VideoFeatures> videos;
  for (std::size_t i = 0; i < 3; ++i) texts.push_back(random_text(rng, d, m, 1 + i));
  for (std::size_t j = 0; j < 4; ++j) videos.push_back(random_video(rng, d, n, 1 + j));
  const Conditioned c = condition_on_text(TextBatch::stack(texts), VideoBatch::stack(videos), p);
  const Shape& s = c.attention.shape();  // [Bt, Bv, H, Q, n]
  ASSERT_EQ(s, (Shape{3, 4, 2, m + 1, n}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t q = 0; q <= m; ++q) {
          double total = 0;
          for (std::size_t f = 0; f < n; ++f) {
            const double w = c.attention.at({i, j, h, q, f});
            EXPECT_GE(w, 0.0);
            if (f >= videos[j].valid_frames) EXPECT_EQ(w, 0.0);
            total += w;
          }
          EXPECT_NEAR(total, 1.0, 1e-9);
        }
}

TEST(Lva, SingleValidFrameGetsAllWeight) {
  Rng rng(3);
  const LvaParams p = LvaParams::init(4, 4, 1, rng);
  const std::vector<TextFeatures> texts{random_text(rng, 4, 2, 2), random_text(rng, 4, 2, 1)};
  const std::vector<VideoFeatures> videos{random_video(rng, 4, 3, 1)};
  const Conditioned c = condition_on_text(TextBatch::stack(texts), VideoBatch::stack(videos), p);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t q = 0; q < 3; ++q) EXPECT_EQ(c.attention.at({i, 0, 0, q, 0}), 1.0);
}

TEST(Lva, IdenticalFramesMatchSingleFrame) {
  Rng rng(4);
  const LvaParams p = LvaParams::init(4, 4, 1, rng);
  const TextFeatures text = random_text(rng, 4, 2, 2);
  const Tensor frame = random_tensor(rng, {1, 4});
  const Tensor parts[] = {frame, frame, frame};
  const VideoFeatures repeated{"v", concat(parts, 0), 3};
  const VideoFeatures single{"v", frame, 1};
  const auto a = testing::values(word_conditioned_frames(text, repeated, p));
  const auto b = testing::values(word_conditioned_frames(text, single, p));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Lva, PermutingValidFramesPermutesAttention) {
  Rng rng(5);
  const std::size_t d = 4, n = 4;
  const LvaParams p = LvaParams::init(d, d, 1, rng);
  const TextFeatures text = random_text(rng, d, 3, 3);
  const VideoFeatures video = random_video(rng, d, n, n);
  const std::size_t perm[] = {2, 0, 3, 1};
  std::vector<Tensor> rows;
  for (auto f : perm) rows.push_back(narrow(video.frames, 0, f, 1));
  const VideoFeatures shuffled{"v", concat(rows, 0), n};
  const auto texts = TextBatch::stack(std::span(&text, 1));
  const Conditioned a = condition_on_text(texts, VideoBatch::stack(std::span(&video, 1)), p);
  const Conditioned b = condition_on_text(texts, VideoBatch::stack(std::span(&shuffled, 1)), p);
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t f = 0; f < n; ++f)
      EXPECT_NEAR(b.attention.at({0, 0, 0, q, f}), a.attention.at({0, 0, 0, q, perm[f]}), 1e-14);
  const auto za = testing::values(a.z), zb = testing::values(b.z);
  for (std::size_t i = 0; i < za.size(); ++i) EXPECT_NEAR(za[i], zb[i], 1e-12);
}

TEST(Lva, SentencePathEqualsWordPathForTheSameVector) {
  Rng rng(6);
  const LvaParams p = LvaParams::init(6, 6, 1, rng);
  const Tensor s = random_tensor(rng, {6});
  const TextFeatures text{"t", s, reshape(s, {1, 6}), 1};
  const VideoFeatures video = random_video(rng, 6, 3, 2);
  EXPECT_EQ(testing::values(sentence_conditioned_video(text, video, p)),
            testing::values(word_conditioned_frames(text, video, p)));
}

TEST(Lva, DuplicateWordsGiveDuplicateRows) {
  Rng rng(7);
  const LvaParams p = LvaParams::init(4, 4, 1, rng);
  const Tensor w = random_tensor(rng, {1, 4});
  const Tensor parts[] = {w, w};
  const TextFeatures text{"t", random_tensor(rng, {4}), concat(parts, 0), 2};
  const Tensor z = word_conditioned_frames(text, random_video(rng, 4, 3, 3), p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(z.at({0, i}), z.at({1, i}));
}

TEST(Lva, DefaultShapes) {
  Rng rng(8);
  const LvaParams p = LvaParams::init(512, 512, 1, rng);
  const TextFeatures text = random_text(rng, 512, 32, 10);
  const VideoFeatures video = random_video(rng, 512, 12, 12);
  EXPECT_EQ(word_conditioned_frames(text, video, p).shape(), (Shape{32, 512}));
  EXPECT_EQ(sentence_conditioned_video(text, video, p).shape(), Shape{512});
}

TEST(Temporal, EmptyStackAddsPositions) {
  Rng rng(9);
  const TemporalEncoderParams p = TemporalEncoderParams::init(4, 5, 0, 2, rng);
  const VideoFeatures video = random_video(rng, 4, 5, 3);
  const VideoFeatures out = encode_temporal(video, p);
  for (std::size_t f = 0; f < 5; ++f)
    for (std::size_t i = 0; i < 4; ++i) {
      const double expect = f < 3 ? video.frames.at({f, i}) + p.position.at({f, i}) : video.frames.at({f, i});
      EXPECT_EQ(out.frames.at({f, i}), expect);
    }
}

TEST(Temporal, DefaultShapeIsPreserved) {
  Rng rng(10);
  const TemporalEncoderParams p = TemporalEncoderParams::init(512, 12, 3, 8, rng);
  const VideoFeatures out = encode_temporal(random_video(rng, 512, 12, 9), p);
  EXPECT_EQ(out.frames.shape(), (Shape{12, 512}));
}

TEST(Temporal, PaddedRowsDoNotLeakIntoValidRows) {
  Rng rng(11);
  const TemporalEncoderParams p = TemporalEncoderParams::init(8, 6, 2, 4, rng);
  const VideoFeatures video = random_video(rng, 8, 6, 3);
  const Tensor rows[] = {narrow(video.frames, 0, 0, 3), narrow(video.frames, 0, 5, 1), narrow(video.frames, 0, 4, 1),
                         narrow(video.frames, 0, 3, 1)};
  const VideoFeatures swapped{"v", concat(rows, 0), 3};
  const auto a = encode_temporal(video, p), b = encode_temporal(swapped, p);
  EXPECT_EQ(testing::values(narrow(a.frames, 0, 0, 3)), testing::values(narrow(b.frames, 0, 0, 3)));
  const VideoFeatures noisy{"v", add(video.frames, concat(std::vector<Tensor>{Tensor::zeros({3, 8}),
                                                                             random_tensor(rng, {3, 8})}, 0)), 3};
  EXPECT_EQ(testing::values(narrow(encode_temporal(noisy, p).frames, 0, 0, 3)),
            testing::values(narrow(a.frames, 0, 0, 3)));
}

TEST(Temporal, WidthMismatchRejected) {
  Rng rng(12);
  const TemporalEncoderParams p = TemporalEncoderParams::init(8, 6, 1, 4, rng);
  EXPECT_THROW(encode_temporal(random_video(rng, 6, 6, 3), p), DimensionError);
  EXPECT_THROW(TemporalEncoderParams::init(6, 4, 1, 4, rng), ConfigError);
}

TEST(Features, InvalidCountsRejected) {
  Rng rng(13);
  const std::vector<VideoFeatures> none{random_video(rng, 4, 3, 0)};
  EXPECT_THROW(VideoBatch::stack(none), DegenerateError);
  const std::vector<TextFeatures> too_many{random_text(rng, 4, 3, 4)};
  EXPECT_THROW(TextBatch::stack(too_many), BoundsError);
  const std::vector<TextFeatures> mixed{random_text(rng, 4, 3, 1), random_text(rng, 5, 3, 1)};
  EXPECT_THROW(TextBatch::stack(mixed), DimensionError);
}

}  // namespace
}  // namespace tcmgc
