// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. With arguments, only
// the listed criterion numbers run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "sr_oracle.hpp"
#include "support.hpp"
#include "tcmgc/aggregate.hpp"
#include "tcmgc/checkpoint.hpp"
#include "tcmgc/gradcheck.hpp"
#include "tcmgc/loss.hpp"
#include "tcmgc/metrics.hpp"
#include "tcmgc/model.hpp"
#include "tcmgc/ops.hpp"
#include "tcmgc/reorg.hpp"
#include "tcmgc/runtime.hpp"
#include "tcmgc/synthetic.hpp"
#include "tcmgc/train.hpp"

namespace tcmgc {
namespace {

using Vec = std::vector<double>;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

std::vector<std::uint8_t> mask_values(const Mask& m) { return {m.data().begin(), m.data().end()}; }

// ---------------------------------------------------------------------------
// 1

ReorgConfig variant(double r, ReorgMode video_word, ReorgMode words, ReorgMode frames) {
  ReorgConfig c;
  c.keep_rate = r;
  c.video_word = video_word;
  c.frame_word_words = words;
  c.frame_word_frames = frames;
  return c;
}

Outcome parameter_counts() {
  using enum ReorgMode;
  struct Row {
    const char* label;
    ReorgConfig reorg;
    bool bidirectional;
    std::size_t expected;
  };
  const Row rows[] = {
      {"video-word baseline", variant(0.1, kNone, kNone, kNone), false, 1024},
      {"video-word r=0.1 removal", variant(0.1, kRemoval, kNone, kNone), false, 9},
      {"video-word r=0.1 fusion", variant(0.1, kFusion, kNone, kNone), false, 16},
      {"video-word r=0.2 removal", variant(0.2, kRemoval, kNone, kNone), false, 36},
      {"bi-isa baseline", variant(0.1, kNone, kNone, kNone), true, 4096},
      {"bi-isa r=0.1 word removal", variant(0.1, kNone, kRemoval, kNone), true, 2066},
  };
  Outcome out{true, ""};
  for (const auto& row : rows) {
    const AggregatorParams p = AggregatorParams::identity(32, row.reorg);
    const std::size_t got = row.bidirectional ? p.bi_isa_entries() : p.video_word.numel();
    if (got != row.expected) {
      out.passed = false;
      out.detail += fmt("%s: %zu != %zu; ", row.label, got, row.expected);
    }
  }
  if (out.passed) out.detail = fmt("%zu counts exact", std::size(rows));
  return out;
}

// ---------------------------------------------------------------------------
// 2

Outcome gradient_integrity() {
  const GradcheckOptions options;
  const auto reports = run_gradcheck(options);
  double worst = 0;
  std::string worst_name, failed;
  bool has_total = false;
  for (const auto& r : reports) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!r.passed) failed += " " + r.name;
    has_total = has_total || r.name == "total_loss";
  }
  Outcome out;
  out.passed = failed.empty() && has_total && worst < 1e-4;
  out.detail = fmt("%zu components, worst %.2e (%s)", reports.size(), worst, worst_name.c_str());
  if (!failed.empty()) out.detail += ", failed:" + failed;
  if (!has_total) out.detail += ", total_loss missing";
  return out;
}

// ---------------------------------------------------------------------------
// 3

Vec softmax_ref(const Vec& x) {
  const double top = *std::max_element(x.begin(), x.end());
  Vec out(x.size());
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - top));
  for (auto& v : out) v /= z;
  return out;
}

double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }
double double_softmax(const Vec& s) { return dot(softmax_ref(softmax_ref(s)), s); }

Outcome identity_equivalence() {
  Rng rng(3);
  const double rates[] = {0.1, 0.2, 0.3, 0.5, 1.0};
  const ReorgMode modes[] = {ReorgMode::kNone, ReorgMode::kRemoval, ReorgMode::kFusion};
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = testing::random_size(rng, 2, 32);
    ReorgConfig reorg;
    reorg.keep_rate = rates[rng.below(std::size(rates))];
    reorg.video_word = modes[rng.below(2)];
    reorg.sentence_frame = modes[rng.below(3)];
    reorg.frame_word_words = modes[rng.below(3)];
    reorg.frame_word_frames = modes[rng.below(3)];
    if (keep_count(m, reorg.keep_rate) == m) reorg.sentence_frame = reorg.frame_word_words = reorg.frame_word_frames =
        ReorgMode::kRemoval;
    const AggregatorParams p = AggregatorParams::identity(m, reorg);
    const double spread = rng.uniform(0.1, 5.0);

    for (const Tensor* w : {&p.video_word, &p.sentence_frame}) {
      const Tensor s = testing::random_tensor(rng, {w->dim(0)}, -spread, spread);
      worst = std::max(worst, std::abs(isa(s, *w).item() - double_softmax(testing::values(s))));
    }
    const std::size_t rows = p.frame_in.dim(0), cols = p.word_in.dim(0);
    const Tensor fw = testing::random_tensor(rng, {rows, cols}, -spread, spread);
    const Vec fv = testing::values(fw);
    Vec word_level(cols), frame_level(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      Vec col(rows);
      for (std::size_t r = 0; r < rows; ++r) col[r] = fv[r * cols + c];
      word_level[c] = double_softmax(col);
    }
    for (std::size_t r = 0; r < rows; ++r) frame_level[r] = double_softmax({fv.begin() + r * cols, fv.begin() + (r + 1) * cols});
    const double bi_ref = 0.5 * (double_softmax(word_level) + double_softmax(frame_level));
    worst = std::max(worst, std::abs(bi_isa(fw, p.frame_in, p.frame_out, p.word_in, p.word_out).item() - bi_ref));

    const Tensor q = testing::random_tensor(rng, {4}, -spread, spread);
    const Vec qv = testing::values(q);
    worst = std::max(worst, std::abs(lsa(q, p.fusion).item() - dot(softmax_ref(qv), qv)));
  }
  return {worst <= 1e-12, fmt("1000 inputs, max |diff| %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 4

struct SrTally {
  std::size_t instances = 0, with_ties = 0, full_keep = 0, mismatches = 0;
  double worst_fused = 0;
};

bool has_ties(const Vec& v) {
  Vec s = v;
  std::sort(s.begin(), s.end());
  return std::adjacent_find(s.begin(), s.end()) != s.end();
}

Tensor fuzz_values(Rng& rng, Shape shape) {
  return rng.below(2) ? testing::tie_heavy_tensor(rng, std::move(shape), 3) : testing::random_tensor(rng, std::move(shape));
}

void check_rows(const Reorganized& r, const Tensor& x, const Mask& mask, std::size_t k, bool fuse, SrTally& tally) {
  const std::size_t rows = x.dim(0), extent = x.dim(1), out_extent = fuse ? k + 1 : k;
  const Vec xv = testing::values(x);
  const auto mv = mask_values(broadcast_mask(mask, x.shape()));
  if (r.values.shape() != Shape{rows, out_extent} || r.selected.shape != Shape{rows, k}) {
    ++tally.mismatches;
    return;
  }
  for (std::size_t b = 0; b < rows; ++b) {
    const Vec slice(xv.begin() + b * extent, xv.begin() + (b + 1) * extent);
    const std::vector<std::uint8_t> valid(mv.begin() + b * extent, mv.begin() + (b + 1) * extent);
    const auto expect = testing::reorganize_slice(slice, valid, k, fuse);
    bool same = true;
    for (std::size_t j = 0; j < out_extent; ++j) {
      const double got = r.values.data()[b * out_extent + j];
      if (j < k) {
        same = same && r.selected.data[b * k + j] == expect.index[j] && got == expect.values[j];
      } else {
        const double diff = std::abs(got - expect.values[j]);
        tally.worst_fused = std::max(tally.worst_fused, diff);
        same = same && diff <= 1e-12;
      }
      same = same && r.valid.data()[b * out_extent + j] == expect.valid[j];
    }
    tally.mismatches += !same;
  }
}

Outcome sr_oracle_equivalence() {
  Rng rng(4);
  SrTally tally;
  for (int trial = 0; trial < 1000; ++trial) {
    ++tally.instances;
    const bool full = trial % 5 == 0;
    const int kind = trial % 3;
    if (kind < 2) {
      const bool fuse = kind == 1;
      const std::size_t batch = testing::random_size(rng, 1, 3);
      const std::size_t extent = testing::random_size(rng, fuse ? 2 : 1, 12);
      const std::size_t most = fuse ? extent - 1 : extent;
      const std::size_t k = full ? most : testing::random_size(rng, 1, most);
      const Tensor x = fuzz_values(rng, {batch, extent});
      const Mask mask = testing::random_mask(rng, {batch, extent}, 0.75);
      const Reorganized r = fuse ? sr_sentence_frame(x, mask, k) : sr_video_word(x, mask, k);
      tally.with_ties += has_ties(testing::values(x));
      tally.full_keep += full;
      check_rows(r, x, mask, k, fuse, tally);
      continue;
    }
    const std::size_t rows = testing::random_size(rng, 2, 8), cols = testing::random_size(rng, 2, 8);
    const ReorgMode choices[] = {ReorgMode::kRemoval, ReorgMode::kFusion};
    const ReorgMode col_mode = choices[rng.below(2)], row_mode = choices[rng.below(2)];
    const bool fuse_cols = col_mode == ReorgMode::kFusion, fuse_rows = row_mode == ReorgMode::kFusion;
    const std::size_t k_cols = full ? (fuse_cols ? cols - 1 : cols) : testing::random_size(rng, 1, fuse_cols ? cols - 1 : cols);
    const std::size_t k_rows = full ? (fuse_rows ? rows - 1 : rows) : testing::random_size(rng, 1, fuse_rows ? rows - 1 : rows);
    const Tensor m = fuzz_values(rng, {rows, cols});
    const Mask row_mask = testing::random_mask(rng, {rows}, 0.75);
    const Mask col_mask = testing::random_mask(rng, {cols}, 0.75);
    const Reorganized r = bi_sr(m, row_mask.reshaped({rows, 1}), col_mask, k_cols, col_mode, k_rows, row_mode);
    const auto expect = testing::bi_reorganize(testing::values(m), rows, cols, mask_values(row_mask),
                                               mask_values(col_mask), k_cols, fuse_cols, k_rows, fuse_rows);
    tally.with_ties += has_ties(testing::values(m));
    tally.full_keep += full;
    bool same = r.values.shape() == Shape{expect.rows, expect.cols} && r.first_stage.data == expect.col_index &&
                r.selected.data == expect.row_index && mask_values(r.valid) == expect.valid;
    for (std::size_t i = 0; same && i < expect.values.size(); ++i) {
      const double diff = std::abs(r.values.data()[i] - expect.values[i]);
      const bool fused_entry = (fuse_rows && i / expect.cols == k_rows) || (fuse_cols && i % expect.cols == k_cols);
      if (fused_entry) {
        tally.worst_fused = std::max(tally.worst_fused, diff);
        same = diff <= 1e-12;
      } else {
        same = diff == 0.0;
      }
    }
    tally.mismatches += !same;
  }
  return {tally.mismatches == 0,
          fmt("%zu instances (%zu with ties, %zu full keep), %zu mismatches, fused max |diff| %.1e", tally.instances,
              tally.with_ties, tally.full_keep, tally.mismatches, tally.worst_fused)};
}

// ---------------------------------------------------------------------------
// 5 and 6

RunConfig toy_config(const SyntheticCorpus& corpus, std::uint64_t seed, double alpha) {
  RunConfig config = parse_config("lr = 0.01\nsteps = 500\ntemporal_layers = 1\ntemporal_heads = 4\n", "toy");
  config.seed = seed;
  config.alpha = alpha;
  return adopt_dimensions(config, corpus.texts, corpus.videos);
}

Outcome toy_convergence() {
  const SyntheticCorpus corpus = generate_synthetic({.seed = 0, .pairs = 64, .d = 32, .m_max = 8, .n_max = 4});
  Trainer trainer(toy_config(corpus, 0, 0.5), corpus.texts.texts(), corpus.videos.videos());
  // Exponential moving average seeded with the first loss.
  constexpr double kBeta = 0.9;
  constexpr std::uint64_t kWindow = 50;
  double smoothed = 0, first = 0;
  bool decreasing = true;
  std::uint64_t perfect_at = 0;
  while (!trainer.done()) {
    const StepStats s = trainer.step_once();
    if (s.step == 1) {
      smoothed = first = s.total;
    } else if (s.step <= kWindow) {
      const double next = kBeta * smoothed + (1 - kBeta) * s.total;
      decreasing = decreasing && next < smoothed;
      smoothed = next;
    }
    if (perfect_at == 0 && evaluate(trainer.last_scores()).t2v.r1 == 100.0) perfect_at = s.step;
    if (perfect_at != 0 && s.step >= kWindow) break;
  }
  std::string detail = fmt("smoothed loss %.3g -> %.3g by step %llu%s; ", first, smoothed,
                           static_cast<unsigned long long>(kWindow), decreasing ? " (strictly decreasing)" : " (NOT monotone)");
  detail += perfect_at ? fmt("train T2V R@1 = 100 at step %llu", static_cast<unsigned long long>(perfect_at))
                       : std::string("train T2V R@1 never reached 100");
  return {decreasing && perfect_at != 0, detail};
}

double diagonal_quad_variance(std::uint64_t seed, double alpha) {
  const SyntheticCorpus corpus = generate_synthetic({.seed = seed, .pairs = 32, .d = 32, .m_max = 8, .n_max = 4});
  const auto texts = corpus.texts.texts();
  const auto videos = corpus.videos.videos();
  Trainer trainer(toy_config(corpus, seed, alpha), texts, videos);
  trainer.run();
  const ScoreGrid grid = score_grid(trainer.params(), trainer.model_config(), texts, videos);
  return sdr(select_quads(grid.quad_tensor(), SdrData::kPositives)).item();
}

double median(Vec v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

Outcome sdr_effect() {
  Vec without, with;
  std::size_t seed_wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    without.push_back(diagonal_quad_variance(seed, 0.0));
    with.push_back(diagonal_quad_variance(seed, 0.5));
    seed_wins += with.back() < without.back();
  }
  const double a0 = median(without), a5 = median(with);
  return {a5 < a0, fmt("median diagonal quad variance %.4g (alpha 0.5) vs %.4g (alpha 0); lower on %zu of 5 seeds",
                       a5, a0, seed_wins)};
}

// ---------------------------------------------------------------------------
// 7

DirectionMetrics metrics_by_sort(const Vec& grid, std::size_t n, bool by_row) {
  std::vector<std::size_t> ranks;
  for (std::size_t q = 0; q < n; ++q) {
    Vec candidates(n);
    for (std::size_t c = 0; c < n; ++c) candidates[c] = by_row ? grid[q * n + c] : grid[c * n + q];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Among equal scores the truth goes first.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (candidates[a] != candidates[b]) return candidates[a] > candidates[b];
      return (a == q) > (b == q);
    });
    ranks.push_back(static_cast<std::size_t>(std::find(order.begin(), order.end(), q) - order.begin()) + 1);
  }
  std::sort(ranks.begin(), ranks.end());
  const double count = static_cast<double>(n);
  auto recall = [&](std::size_t k) {
    return 100.0 * static_cast<double>(std::upper_bound(ranks.begin(), ranks.end(), k) - ranks.begin()) / count;
  };
  DirectionMetrics m;
  m.r1 = recall(1);
  m.r5 = recall(5);
  m.r10 = recall(10);
  m.mdr = n % 2 ? static_cast<double>(ranks[n / 2]) : 0.5 * static_cast<double>(ranks[n / 2 - 1] + ranks[n / 2]);
  m.mnr = static_cast<double>(std::accumulate(ranks.begin(), ranks.end(), std::size_t{0})) / count;
  m.rsum = m.r1 + m.r5 + m.r10;
  return m;
}

bool same_metrics(const DirectionMetrics& a, const DirectionMetrics& b) {
  return a.r1 == b.r1 && a.r5 == b.r5 && a.r10 == b.r10 && a.mdr == b.mdr && a.mnr == b.mnr && a.rsum == b.rsum;
}

Outcome metric_oracle() {
  Rng rng(7);
  const std::size_t n = 100;
  std::size_t checked = 0, mismatched = 0;
  for (int trial = 0; trial < 4; ++trial) {
    // Diagonal boost so recall is not trivially zero; odd trials are tie-heavy.
    Vec grid = testing::values(trial % 2 ? testing::tie_heavy_tensor(rng, {n, n}, 5) : testing::random_tensor(rng, {n, n}));
    for (std::size_t i = 0; i < n; ++i) grid[i * n + i] += 0.25 * static_cast<double>(trial);
    const MetricsReport report = evaluate(Tensor::from({n, n}, grid));
    const DirectionMetrics t2v = metrics_by_sort(grid, n, true), v2t = metrics_by_sort(grid, n, false);
    mismatched += !same_metrics(report.t2v, t2v) + !same_metrics(report.v2t, v2t);
    mismatched += report.sumr != t2v.rsum + v2t.rsum;
    checked += 13;
  }
  double worst_infonce = 0;
  for (double c : {0.0, 0.37, -2.5, 1.0}) {
    worst_infonce = std::max(worst_infonce, std::abs(infonce(Tensor::full({4, 4}, c), 100.0).item() - 2 * std::log(4.0)));
  }
  return {mismatched == 0 && worst_infonce <= 1e-9,
          fmt("%zu metric values on 100x100 grids, %zu mismatches; constant-grid infonce |diff| %.1e", checked,
              mismatched, worst_infonce)};
}

// ---------------------------------------------------------------------------
// 8

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism_and_chunking() {
  namespace fs = std::filesystem;
  const fs::path dir(testing::scratch_dir("acceptance"));
  const SyntheticSpec spec{.seed = 8, .pairs = 40, .d = 32, .m_max = 8, .n_max = 4};
  const SyntheticCorpus corpus = generate_synthetic(spec);
  save_archive(corpus.texts, (dir / "t.mgca").string());
  save_archive(corpus.videos, (dir / "v.mgca").string());
  RunConfig config = parse_config("lr = 0.01\nsteps = 15\ntemporal_layers = 1\ntemporal_heads = 4\n", "toy");
  config = adopt_dimensions(config, corpus.texts, corpus.videos);
  const auto texts = corpus.texts.texts();
  const auto videos = corpus.videos.videos();
  Trainer trainer(config, texts, videos);
  trainer.run();
  const std::string ckpt = (dir / "model.ckpt").string();
  save_checkpoint(trainer.checkpoint(), ckpt);

  std::string reference;
  std::size_t reports = 0, differing = 0;
  for (const std::string& chunk : std::vector<std::string>{"1", "7", std::to_string(spec.pairs)}) {
    for (const std::string workers : {"1", "4"}) {
      const std::string report = (dir / ("report_" + chunk + "_" + workers + ".txt")).string();
      std::ostringstream out, err;
      const int code = cli::run({"eval", "--text", (dir / "t.mgca").string(), "--video", (dir / "v.mgca").string(),
                                 "--checkpoint", ckpt, "--chunk-size", chunk, "--workers", workers, "--report", report},
                                out, err);
      if (code != 0) return {false, "eval exited with " + std::to_string(code) + ": " + err.str()};
      const std::string text = slurp(report);
      if (reports++ == 0) reference = text;
      differing += text != reference;
    }
  }

  const ScoreGrid live = score_grid(trainer.params(), trainer.model_config(), texts, videos);
  Rng rng(12345);
  ModelParams reloaded = ModelParams::init(trainer.model_config(), rng);
  reloaded.load(load_checkpoint(ckpt));
  const ScoreGrid restored = score_grid(reloaded, trainer.model_config(), texts, videos, {.chunk_size = 7, .workers = 4});
  const bool grid_exact = live.final == restored.final && live.quads == restored.quads;
  return {differing == 0 && grid_exact && !reference.empty(),
          fmt("%zu reports, %zu differ; reloaded checkpoint grid %s", reports, differing,
              grid_exact ? "bit-identical" : "DIFFERS")};
}

}  // namespace
}  // namespace tcmgc

int main(int argc, char** argv) {
  using namespace tcmgc;
  retain_freed_memory();
  const std::vector<Criterion> criteria = {
      {1, "parameter counts", 1, parameter_counts},
      {2, "gradient integrity", 30, gradient_integrity},
      {3, "identity initialization", 5, identity_equivalence},
      {4, "similarity reorganization oracle", 10, sr_oracle_equivalence},
      {5, "toy training convergence", 60, toy_convergence},
      {6, "variance regularizer effect", 300, sdr_effect},
      {7, "metric oracle", 5, metric_oracle},
      {8, "determinism and chunking", 30, determinism_and_chunking},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.budget_s;
    const bool passed = outcome.passed && in_time;
    failures += !passed;
    std::printf("criterion %d %s  %-34s %7.2f s (limit %g s%s)  %s\n", c.id, passed ? "PASS" : "FAIL", c.title,
                seconds, c.budget_s, in_time ? "" : ", exceeded", outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
