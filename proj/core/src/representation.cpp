// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/representation.hpp"

#include <cmath>

#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

LinearParams init_linear(std::size_t in, std::size_t out, bool bias, Rng& rng) {
  LinearParams p;
  p.weight = uniform_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (bias) p.bias = Tensor::zeros({out}, true);
  return p;
}

LayerNormParams init_norm(std::size_t d) {
  return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

Tensor apply(const LinearParams& p, const Tensor& x) {
  Tensor y = matmul(x, p.weight);
  return p.bias.defined() ? add(y, p.bias) : y;
}

Tensor apply(const LayerNormParams& p, const Tensor& x) { return layer_norm(x, p.gamma, p.beta); }

void collect_linear(std::vector<NamedTensor>& out, const std::string& name, const LinearParams& p) {
  out.push_back({name + ".weight", p.weight});
  if (p.bias.defined()) out.push_back({name + ".bias", p.bias});
}

void collect_norm(std::vector<NamedTensor>& out, const std::string& name, const LayerNormParams& p) {
  out.push_back({name + ".gamma", p.gamma});
  out.push_back({name + ".beta", p.beta});
}

Mask slice_rows(const Mask& mask, std::size_t begin, std::size_t count) {
  const std::size_t width = mask.shape()[1];
  const auto src = mask.data();
  std::vector<std::uint8_t> values(src.begin() + static_cast<std::ptrdiff_t>(begin * width),
                                   src.begin() + static_cast<std::ptrdiff_t>((begin + count) * width));
  return Mask({count, width}, std::move(values));
}

void check_valid_count(std::size_t valid, std::size_t extent, const std::string& id, const char* what) {
  if (valid == 0) throw DegenerateError("'" + id + "' has no valid " + what);
  if (valid > extent) {
    throw BoundsError("'" + id + "' claims " + std::to_string(valid) + " valid " + what + " of " +
                      std::to_string(extent));
  }
}

// [B, n, d] -> [B, heads, n, d / heads]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const auto& s = x.shape();
  return transpose(reshape(x, {s[0], s[1], heads, s[2] / heads}), 1, 2);
}

}  // namespace

TextBatch TextBatch::stack(std::span<const TextFeatures> texts) {
  if (texts.empty()) throw DegenerateError("cannot stack an empty text list");
  const std::size_t m = texts[0].words.dim(0);
  const std::size_t d = texts[0].words.dim(1);
  std::vector<Tensor> sentences;
  std::vector<Tensor> words;
  TextBatch batch;
  for (const auto& t : texts) {
    if (t.sentence.shape() != Shape{d} || t.words.shape() != Shape{m, d}) {
      throw DimensionError("text '" + t.id + "' has shapes " + shape_str(t.sentence.shape()) + " and " +
                           shape_str(t.words.shape()) + ", expected [" + std::to_string(d) + "] and [" +
                           std::to_string(m) + ", " + std::to_string(d) + "]");
    }
    check_valid_count(t.valid_words, m, t.id, "words");
    sentences.push_back(reshape(t.sentence, {1, d}));
    words.push_back(reshape(t.words, {1, m, d}));
    batch.valid_words.push_back(t.valid_words);
  }
  batch.sentence = concat(sentences, 0);
  batch.words = concat(words, 0);
  batch.word_mask = Mask::prefix(batch.valid_words, m);
  return batch;
}

TextBatch TextBatch::slice(std::size_t begin, std::size_t count) const {
  TextBatch out;
  out.sentence = narrow(sentence, 0, begin, count);
  out.words = narrow(words, 0, begin, count);
  out.word_mask = slice_rows(word_mask, begin, count);
  out.valid_words.assign(valid_words.begin() + static_cast<std::ptrdiff_t>(begin),
                         valid_words.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

VideoBatch VideoBatch::stack(std::span<const VideoFeatures> videos) {
  if (videos.empty()) throw DegenerateError("cannot stack an empty video list");
  const std::size_t n = videos[0].frames.dim(0);
  const std::size_t d = videos[0].frames.dim(1);
  std::vector<Tensor> frames;
  VideoBatch batch;
  for (const auto& v : videos) {
    if (v.frames.shape() != Shape{n, d}) {
      throw DimensionError("video '" + v.id + "' has shape " + shape_str(v.frames.shape()) + ", expected [" +
                           std::to_string(n) + ", " + std::to_string(d) + "]");
    }
    check_valid_count(v.valid_frames, n, v.id, "frames");
    frames.push_back(reshape(v.frames, {1, n, d}));
    batch.valid_frames.push_back(v.valid_frames);
  }
  batch.frames = concat(frames, 0);
  batch.frame_mask = Mask::prefix(batch.valid_frames, n);
  return batch;
}

VideoBatch VideoBatch::slice(std::size_t begin, std::size_t count) const {
  VideoBatch out;
  out.frames = narrow(frames, 0, begin, count);
  out.frame_mask = slice_rows(frame_mask, begin, count);
  out.valid_frames.assign(valid_frames.begin() + static_cast<std::ptrdiff_t>(begin),
                          valid_frames.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

TemporalEncoderParams TemporalEncoderParams::init(std::size_t d, std::size_t n_max, std::size_t layers,
                                                  std::size_t heads, Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("temporal_heads = " + std::to_string(heads) + " must divide d = " + std::to_string(d));
  }
  TemporalEncoderParams p;
  p.heads = heads;
  std::vector<double> pos(n_max * d);
  for (auto& v : pos) v = 0.01 * rng.normal();
  p.position = Tensor::from({n_max, d}, std::move(pos), true);
  for (std::size_t l = 0; l < layers; ++l) {
    EncoderLayerParams layer;
    layer.query = init_linear(d, d, true, rng);
    layer.key = init_linear(d, d, true, rng);
    layer.value = init_linear(d, d, true, rng);
    layer.output = init_linear(d, d, true, rng);
    layer.attn_norm = init_norm(d);
    layer.ff_in = init_linear(d, 4 * d, true, rng);
    layer.ff_out = init_linear(4 * d, d, true, rng);
    layer.ff_norm = init_norm(d);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void TemporalEncoderParams::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "position", position});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + "layer" + std::to_string(l) + ".";
    const auto& layer = layers[l];
    collect_linear(out, base + "query", layer.query);
    collect_linear(out, base + "key", layer.key);
    collect_linear(out, base + "value", layer.value);
    collect_linear(out, base + "output", layer.output);
    collect_norm(out, base + "attn_norm", layer.attn_norm);
    collect_linear(out, base + "ff_in", layer.ff_in);
    collect_linear(out, base + "ff_out", layer.ff_out);
    collect_norm(out, base + "ff_norm", layer.ff_norm);
  }
}

LvaParams LvaParams::init(std::size_t d, std::size_t d_p, std::size_t heads, Rng& rng) {
  if (d_p == 0) throw ConfigError("d_p must be positive");
  if (heads == 0 || d_p % heads != 0) {
    throw ConfigError("lva_heads = " + std::to_string(heads) + " must divide d_p = " + std::to_string(d_p));
  }
  LvaParams p;
  p.heads = heads;
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_q = uniform_tensor({d, d_p}, in_bound, rng);
  p.w_k = uniform_tensor({d, d_p}, in_bound, rng);
  p.w_v = uniform_tensor({d, d_p}, in_bound, rng);
  p.w_o = uniform_tensor({d_p, d}, 1.0 / std::sqrt(static_cast<double>(d_p)), rng);
  p.fc = init_linear(d, d, true, rng);
  p.query_norm = init_norm(d);
  p.kv_norm = init_norm(d);
  p.out_norm = init_norm(d);
  p.final_norm = init_norm(d);
  return p;
}

void LvaParams::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "w_q", w_q});
  out.push_back({prefix + "w_k", w_k});
  out.push_back({prefix + "w_v", w_v});
  out.push_back({prefix + "w_o", w_o});
  collect_linear(out, prefix + "fc", fc);
  collect_norm(out, prefix + "query_norm", query_norm);
  collect_norm(out, prefix + "kv_norm", kv_norm);
  collect_norm(out, prefix + "out_norm", out_norm);
  collect_norm(out, prefix + "final_norm", final_norm);
}

Tensor encode_temporal(const Tensor& frames, const Mask& frame_mask, const TemporalEncoderParams& params) {
  if (frames.rank() != 3) throw DimensionError("encode_temporal: frames must be [B, n, d], got " + shape_str(frames.shape()));
  const std::size_t b = frames.dim(0);
  const std::size_t n = frames.dim(1);
  const std::size_t d = frames.dim(2);
  if (params.position.dim(1) != d || n > params.position.dim(0)) {
    throw DimensionError("encode_temporal: frames " + shape_str(frames.shape()) +
                         " do not fit position table " + shape_str(params.position.shape()));
  }
  if (frame_mask.shape() != Shape{b, n}) {
    throw DimensionError("encode_temporal: mask " + shape_str(frame_mask.shape()) + " does not match frames " +
                         shape_str(frames.shape()));
  }
  const std::size_t heads = params.heads;
  const std::size_t head_dim = d / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Mask key_mask = frame_mask.reshaped({b, 1, 1, n});

  Tensor x = add(frames, narrow(params.position, 0, 0, n));
  for (const auto& layer : params.layers) {
    const Tensor q = split_heads(apply(layer.query, x), heads);
    const Tensor k = split_heads(apply(layer.key, x), heads);
    const Tensor v = split_heads(apply(layer.value, x), heads);
    const Tensor weights = masked_softmax(matmul(q, transpose(k, 2, 3)), -1, key_mask, attn_scale);
    const Tensor context = reshape(transpose(matmul(weights, v), 1, 2), {b, n, d});
    x = apply(layer.attn_norm, add(x, apply(layer.output, context)));
    const Tensor ff = apply(layer.ff_out, gelu(apply(layer.ff_in, x)));
    x = apply(layer.ff_norm, add(x, ff));
  }
  // Padded rows keep their input values.
  const Tensor keep = Tensor::from_mask(frame_mask.reshaped({b, n, 1}));
  std::vector<double> inverted(keep.data().begin(), keep.data().end());
  for (auto& v : inverted) v = 1.0 - v;
  return add(mul(x, keep), mul(frames, Tensor::from({b, n, 1}, std::move(inverted))));
}

VideoBatch encode_temporal(const VideoBatch& videos, const TemporalEncoderParams& params) {
  VideoBatch out = videos;
  out.frames = encode_temporal(videos.frames, videos.frame_mask, params);
  return out;
}

VideoFeatures encode_temporal(const VideoFeatures& video, const TemporalEncoderParams& params) {
  const VideoBatch encoded = encode_temporal(VideoBatch::stack(std::span(&video, 1)), params);
  VideoFeatures out = video;
  out.frames = reshape(encoded.frames, video.frames.shape());
  return out;
}

Conditioned attend(const Tensor& queries, const Mask& query_mask, const Tensor& frames, const Mask& frame_mask,
                   const LvaParams& params) {
  const std::size_t d = params.dim();
  if (queries.rank() != 3 || frames.rank() != 3 || queries.dim(2) != d || frames.dim(2) != d) {
    throw DimensionError("attend: queries " + shape_str(queries.shape()) + " and frames " +
                         shape_str(frames.shape()) + " must be [B, len, " + std::to_string(d) + "]");
  }
  const std::size_t bt = queries.dim(0);
  const std::size_t nq = queries.dim(1);
  const std::size_t bv = frames.dim(0);
  const std::size_t n = frames.dim(1);
  if (query_mask.shape() != Shape{bt, nq} || frame_mask.shape() != Shape{bv, n}) {
    throw DimensionError("attend: masks " + shape_str(query_mask.shape()) + " and " +
                         shape_str(frame_mask.shape()) + " do not match inputs");
  }
  const std::size_t heads = params.heads;
  const std::size_t dp = params.projection_dim();
  const std::size_t head_dim = dp / heads;

  // [Bt, 1, H, Q, dh] against [1, Bv, H, dh, n] broadcasts over every pair.
  const Tensor q = reshape(split_heads(matmul(apply(params.query_norm, queries), params.w_q), heads),
                           {bt, 1, heads, nq, head_dim});
  const Tensor kv_in = apply(params.kv_norm, frames);
  const Tensor k = split_heads(matmul(kv_in, params.w_k), heads);
  const Tensor kt = reshape(transpose(k, 2, 3), {1, bv, heads, head_dim, n});
  const Tensor weights = masked_softmax(matmul(q, kt), -1, frame_mask.reshaped({1, bv, 1, 1, n}),
                                        1.0 / std::sqrt(static_cast<double>(head_dim)));

  // Fold W_O into the values once per video instead of once per pair.
  const Tensor v = split_heads(matmul(kv_in, params.w_v), heads);
  const Tensor vo = reshape(matmul(v, reshape(params.w_o, {heads, head_dim, d})), {1, bv, heads, n, d});
  Tensor context = matmul(weights, vo);
  context = heads == 1 ? reshape(context, {bt, bv, nq, d}) : sum(context, 2);

  const Tensor z_hat = apply(params.out_norm, context);
  Tensor z = apply(params.final_norm, add(apply(params.fc, z_hat), z_hat));
  z = mul(z, Tensor::from_mask(query_mask.reshaped({bt, 1, nq, 1})));
  return {z, weights};
}

Conditioned condition_on_text(const TextBatch& texts, const VideoBatch& encoded, const LvaParams& params) {
  const std::size_t bt = texts.size();
  const std::size_t d = texts.sentence.dim(1);
  const std::size_t m = texts.words.dim(1);
  const Tensor parts[] = {reshape(texts.sentence, {bt, 1, d}), texts.words};
  const Tensor queries = concat(parts, 1);
  std::vector<std::uint8_t> qmask(bt * (m + 1), 0);
  const auto wm = texts.word_mask.data();
  for (std::size_t i = 0; i < bt; ++i) {
    qmask[i * (m + 1)] = 1;
    for (std::size_t j = 0; j < m; ++j) qmask[i * (m + 1) + 1 + j] = wm[i * m + j];
  }
  return attend(queries, Mask({bt, m + 1}, std::move(qmask)), encoded.frames, encoded.frame_mask, params);
}

Tensor sentence_conditioned_video(const TextFeatures& text, const VideoFeatures& encoded, const LvaParams& params) {
  const auto texts = TextBatch::stack(std::span(&text, 1));
  const auto videos = VideoBatch::stack(std::span(&encoded, 1));
  const auto out = condition_on_text(texts, videos, params);
  return reshape(narrow(out.z, 2, 0, 1), {params.dim()});
}

Tensor word_conditioned_frames(const TextFeatures& text, const VideoFeatures& encoded, const LvaParams& params) {
  const auto texts = TextBatch::stack(std::span(&text, 1));
  const auto videos = VideoBatch::stack(std::span(&encoded, 1));
  const auto out = condition_on_text(texts, videos, params);
  const std::size_t m = text.words.dim(0);
  return reshape(narrow(out.z, 2, 1, m), {m, params.dim()});
}

}  // namespace tcmgc
