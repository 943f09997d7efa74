// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tcmgc/aggregate.hpp"
#include "tcmgc/autograd.hpp"
#include "tcmgc/contrast.hpp"
#include "tcmgc/error.hpp"
#include "tcmgc/loss.hpp"
#include "tcmgc/model.hpp"
#include "tcmgc/ops.hpp"
#include "tcmgc/reorg.hpp"
#include "tcmgc/representation.hpp"
#include "tcmgc/rng.hpp"

namespace tcmgc {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradientComparison compare_gradients(const std::function<Tensor()>& loss, std::span<Tensor> inputs, double h) {
  for (auto& t : inputs) t.zero_grad();
  backward(loss());
  GradientComparison result;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus = 0.0;
      double minus = 0.0;
      {
        NoGradGuard no_grad;
        values[i] = saved + h;
        plus = loss().item();
        values[i] = saved - h;
        minus = loss().item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.entries;
    }
  }
  return result;
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Random mask with at least one set entry along the last axis of every slice.
Mask random_mask(Rng& rng, Shape shape) {
  const std::size_t last = shape.back();
  std::vector<std::uint8_t> v(shape_numel(shape));
  for (std::size_t s = 0; s < v.size() / last; ++s) {
    for (std::size_t j = 0; j < last; ++j) v[s * last + j] = rng.uniform() < 0.6 ? 1 : 0;
    v[s * last + rng.below(last)] = 1;
  }
  return Mask(std::move(shape), std::move(v));
}

// Contracts an op output with fixed random weights so every entry matters.
std::function<Tensor()> weighted(Rng& rng, std::function<Tensor()> op) {
  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = op();
  }
  const Tensor weights = random_tensor(rng, probe.shape()).detach();
  return [op = std::move(op), weights] { return sum_all(mul(op(), weights)); };
}

struct Instance {
  std::vector<Tensor> inputs;
  std::function<Tensor()> loss;
};

struct Case {
  std::string name;
  std::size_t instances;
  std::function<Instance(Rng&)> build;
};

void collect_all(const std::vector<NamedTensor>& named, std::vector<Tensor>& out) {
  for (const auto& n : named) out.push_back(n.tensor);
}

std::vector<Case> make_cases(const GradcheckOptions& opt) {
  const std::size_t d = opt.dim;
  const std::size_t n_ops = opt.instances;
  const double lambda = opt.lambda;
  std::vector<Case> cases;

  auto unary = [&](const char* name, std::function<Tensor(const Tensor&)> op, Shape shape) {
    cases.push_back({name, n_ops, [op, shape](Rng& rng) {
                       Tensor x = random_tensor(rng, shape);
                       return Instance{{x}, weighted(rng, [op, x] { return op(x); })};
                     }});
  };
  auto binary = [&](const char* name, std::function<Tensor(const Tensor&, const Tensor&)> op, Shape sa, Shape sb) {
    cases.push_back({name, n_ops, [op, sa, sb](Rng& rng) {
                       Tensor a = random_tensor(rng, sa);
                       Tensor b = random_tensor(rng, sb);
                       return Instance{{a, b}, weighted(rng, [op, a, b] { return op(a, b); })};
                     }});
  };

  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 4}, {4});
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, {2, 1, 3}, {4, 3});
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {3, 4}, {3, 1});
  unary("scale", [](const Tensor& x) { return scale(x, -1.7); }, {5});
  unary("gelu", [](const Tensor& x) { return gelu(scale(x, 3.0)); }, {2, 6});
  binary("matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {2, 3, 4}, {4, 5});
  binary("matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {2, 1, 3, 4}, {1, 2, 4, 2});
  unary("transpose", [](const Tensor& x) { return transpose(x, 0, 2); }, {2, 3, 4});
  unary("reshape", [](const Tensor& x) { return reshape(x, {4, 3}); }, {2, 6});
  unary("narrow", [](const Tensor& x) { return narrow(x, 1, 1, 2); }, {3, 4});
  binary("concat", [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat(parts, 1);
  }, {2, 3}, {2, 2});
  unary("softmax", [](const Tensor& x) { return softmax(x, 1, 0.7); }, {3, 5});
  cases.push_back({"masked_softmax", n_ops, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {4, 5});
                     const Mask m = random_mask(rng, {4, 5});
                     return Instance{{x}, weighted(rng, [x, m] { return masked_softmax(x, -1, m, 1.3); })};
                   }});
  unary("log_softmax", [](const Tensor& x) { return log_softmax(x, 0, 2.0); }, {4, 3});
  cases.push_back({"layer_norm", n_ops, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {3, 5});
                     Tensor g = random_tensor(rng, {5});
                     Tensor b = random_tensor(rng, {5});
                     return Instance{{x, g, b}, weighted(rng, [x, g, b] { return layer_norm(x, g, b); })};
                   }});
  cases.push_back({"l2_normalize", n_ops, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {4, 3});
                     const Mask rows = random_mask(rng, {4});
                     return Instance{{x}, weighted(rng, [x, rows] { return l2_normalize(x, rows); })};
                   }});
  cases.push_back({"gather", n_ops, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {3, 4});
                     IndexTensor idx{{3, 5}, {}};
                     for (std::size_t i = 0; i < 15; ++i) idx.data.push_back(rng.below(4));
                     return Instance{{x}, weighted(rng, [x, idx] { return gather(x, idx, 1); })};
                   }});
  unary("sum", [](const Tensor& x) { return sum(x, 1); }, {3, 4});
  unary("mean", [](const Tensor& x) { return mean(x, 0); }, {3, 4});
  unary("variance", [](const Tensor& x) { return variance(x, -1); }, {3, 4});

  const std::size_t n_composite = std::max<std::size_t>(1, std::min<std::size_t>(n_ops, 3));
  const std::size_t heads = d % 2 == 0 ? 2 : 1;
  cases.push_back({"temporal_encoder", n_composite, [d, heads](Rng& rng) {
                     TemporalEncoderParams p = TemporalEncoderParams::init(d, 4, 2, heads, rng);
                     Tensor frames = random_tensor(rng, {2, 4, d});
                     const std::size_t valid[] = {4, 2};
                     const Mask mask = Mask::prefix(valid, 4);
                     Instance inst;
                     inst.inputs.push_back(frames);
                     std::vector<NamedTensor> named;
                     p.collect(named, "");
                     collect_all(named, inst.inputs);
                     inst.loss = weighted(rng, [frames, mask, p] { return encode_temporal(frames, mask, p); });
                     return inst;
                   }});
  cases.push_back({"language_video_attention", n_composite, [d, heads](Rng& rng) {
                     LvaParams p = LvaParams::init(d, d, heads, rng);
                     Tensor queries = random_tensor(rng, {2, 3, d});
                     Tensor frames = random_tensor(rng, {3, 4, d});
                     const Mask qmask = random_mask(rng, {2, 3});
                     const Mask fmask = random_mask(rng, {3, 4});
                     Instance inst;
                     inst.inputs = {queries, frames};
                     std::vector<NamedTensor> named;
                     p.collect(named, "");
                     collect_all(named, inst.inputs);
                     inst.loss = weighted(rng, [=] { return attend(queries, qmask, frames, fmask, p).z; });
                     return inst;
                   }});
  cases.push_back({"contrast", n_composite, [d](Rng& rng) {
                     const std::size_t m = 4;
                     std::vector<TextFeatures> texts;
                     for (std::size_t i = 0; i < 2; ++i) {
                       texts.push_back({"t", random_tensor(rng, {d}), random_tensor(rng, {m, d}), i + 2});
                     }
                     Tensor z = random_tensor(rng, {2, 3, m + 1, d});
                     Instance inst;
                     inst.inputs = {texts[0].sentence, texts[0].words, texts[1].sentence, texts[1].words, z};
                     inst.loss = weighted(rng, [texts, z] {
                       const RawSimilarities raw = compute_raw(TextBatch::stack(texts), z, true);
                       const Tensor parts[] = {reshape(raw.video_sentence, {2, 3, 1}), raw.video_word,
                                               raw.sentence_frame, reshape(raw.frame_word, {2, 3, 16})};
                       return concat(parts, 2);
                     });
                     return inst;
                   }});
  cases.push_back({"similarity_reorganization", n_composite, [](Rng& rng) {
                     Tensor v = random_tensor(rng, {3, 6});
                     Tensor fw = random_tensor(rng, {2, 5, 5});
                     const Mask vm = random_mask(rng, {3, 6});
                     const Mask words = random_mask(rng, {2, 5});
                     const Mask rows = words.reshaped({2, 5, 1});
                     const Mask cols = words.reshaped({2, 1, 5});
                     const auto removal =
                         weighted(rng, [=] { return reorganize(v, vm, -1, 2, ReorgMode::kRemoval).values; });
                     const auto fusion =
                         weighted(rng, [=] { return reorganize(v, vm, -1, 2, ReorgMode::kFusion).values; });
                     const auto matrix = weighted(rng, [=] {
                       return bi_sr(fw, rows, cols, 2, ReorgMode::kFusion, 2, ReorgMode::kFusion).values;
                     });
                     return Instance{{v, fw}, [=] { return add(add(removal(), fusion()), matrix()); }};
                   }});
  cases.push_back({"isa", n_ops, [](Rng& rng) {
                     Tensor s = random_tensor(rng, {3, 4});
                     Tensor w = random_tensor(rng, {4, 4});
                     const Mask m = random_mask(rng, {3, 4});
                     return Instance{{s, w}, weighted(rng, [s, w, m] { return add(isa(s, w), isa(s, w, m)); })};
                   }});
  cases.push_back({"bi_isa", n_ops, [](Rng& rng) {
                     Tensor m = random_tensor(rng, {2, 3, 4});
                     Tensor w3 = random_tensor(rng, {3, 3});
                     Tensor w4 = random_tensor(rng, {4, 4});
                     Tensor w5 = random_tensor(rng, {4, 4});
                     Tensor w6 = random_tensor(rng, {3, 3});
                     const Mask mask = random_mask(rng, {2, 3, 4});
                     return Instance{{m, w3, w4, w5, w6}, weighted(rng, [=] {
                                       return add(bi_isa(m, w3, w4, w5, w6), bi_isa(m, w3, w4, w5, w6, mask));
                                     })};
                   }});
  cases.push_back({"lsa", n_ops, [](Rng& rng) {
                     Tensor q = random_tensor(rng, {3, 4});
                     Tensor w = random_tensor(rng, {4, 4});
                     return Instance{{q, w}, weighted(rng, [q, w] { return lsa(q, w); })};
                   }});
  cases.push_back({"infonce", n_ops, [lambda](Rng& rng) {
                     Tensor s = random_tensor(rng, {4, 4});
                     return Instance{{s}, [s, lambda] { return infonce(s, lambda); }};
                   }});
  cases.push_back({"sdr", n_ops, [](Rng& rng) {
                     Tensor q = random_tensor(rng, {3, 3, 4});
                     return Instance{{q}, [q] { return sdr(select_quads(q, SdrData::kPositives)); }};
                   }});
  cases.push_back({"total_loss", 1, [d, lambda](Rng& rng) {
                     RunConfig config;
                     config.d = d;
                     config.lambda = lambda;
                     config.m_max = 6;
                     config.n_max = 4;
                     config.temporal_heads = d % 8 == 0 ? 8 : 1;
                     const ModelConfig mc = ModelConfig::from(config);
                     ModelParams params = ModelParams::init(mc, rng);
                     std::vector<TextFeatures> texts;
                     std::vector<VideoFeatures> videos;
                     for (std::size_t i = 0; i < 4; ++i) {
                       texts.push_back({"t", random_tensor(rng, {d}), random_tensor(rng, {6, d}), 3 + i % 4});
                       videos.push_back({"v", random_tensor(rng, {4, d}), 2 + i % 3});
                     }
                     Instance inst;
                     collect_all(params.named(), inst.inputs);
                     for (const auto& t : texts) {
                       inst.inputs.push_back(t.sentence);
                       inst.inputs.push_back(t.words);
                     }
                     for (const auto& v : videos) inst.inputs.push_back(v.frames);
                     const LossConfig loss = config.loss();
                     inst.loss = [=] {
                       const Forward out = forward(params, mc, TextBatch::stack(texts), VideoBatch::stack(videos));
                       return total_loss(out.scores.final, out.scores.quads, loss).total;
                     };
                     return inst;
                   }});
  return cases;
}

}  // namespace

std::vector<ComponentReport> run_gradcheck(const GradcheckOptions& options) {
  Rng rng(options.seed);
  std::vector<ComponentReport> reports;
  for (const auto& c : make_cases(options)) {
    auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.name == c.name; });
    if (it == reports.end()) {
      reports.push_back({c.name, 0.0, 0, true});
      it = reports.end() - 1;
    }
    for (std::size_t i = 0; i < c.instances; ++i) {
      Instance inst = c.build(rng);
      const GradientComparison cmp = compare_gradients(inst.loss, inst.inputs, options.h);
      it->max_rel_error = std::max(it->max_rel_error, cmp.max_rel_error);
      it->entries += cmp.entries;
    }
    it->passed = it->max_rel_error < options.tolerance;
  }
  return reports;
}

}  // namespace tcmgc
