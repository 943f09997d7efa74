// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "tcmgc/archive.hpp"
#include "tcmgc/checkpoint.hpp"
#include "tcmgc/config.hpp"
#include "tcmgc/error.hpp"
#include "tcmgc/gradcheck.hpp"
#include "tcmgc/metrics.hpp"
#include "tcmgc/model.hpp"
#include "tcmgc/synthetic.hpp"
#include "tcmgc/train.hpp"

namespace tcmgc::cli {

namespace {

struct SynthArgs {
  SyntheticSpec spec;
  std::string out_text;
  std::string out_video;
};

struct TrainArgs {
  std::string text, video, config, out_checkpoint, log, resume;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string text, video, checkpoint, report;
  std::optional<std::size_t> chunk_size;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
};

struct GradcheckArgs {
  GradcheckOptions options;
  std::string inject_fault;
};

// Opens `path` for writing, or falls back to `fallback` when empty.
std::ostream& open_output(const std::string& path, std::unique_ptr<std::ofstream>& holder, std::ostream& fallback) {
  if (path.empty()) return fallback;
  holder = std::make_unique<std::ofstream>(path, std::ios::trunc);
  if (!*holder) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path + "' for writing");
  return *holder;
}

struct PairedData {
  EmbeddingArchive texts;
  EmbeddingArchive videos;
  std::vector<std::size_t> video_of_text;
};

PairedData load_pair(const std::string& text_path, const std::string& video_path) {
  PairedData data;
  data.texts = load_archive(text_path);
  data.videos = load_archive(video_path);
  data.video_of_text = pair_archives(data.texts, data.videos);
  return data;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticCorpus corpus = generate_synthetic(a.spec);
  save_archive(corpus.texts, a.out_text);
  save_archive(corpus.videos, a.out_video);
  out << "wrote " << corpus.texts.items.size() << " pairs to " << a.out_text << " and " << a.out_video << "\n";
  return kSuccess;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const PairedData data = load_pair(a.text, a.video);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  RunConfig config;
  if (!a.config.empty()) {
    config = load_config(a.config);
  } else if (resume) {
    config = parse_config(resume->config_text, a.resume);
  }
  if (a.seed) config.seed = *a.seed;
  config = adopt_dimensions(std::move(config), data.texts, data.videos);

  std::vector<VideoFeatures> all_videos = data.videos.videos();
  std::vector<VideoFeatures> videos;
  for (auto j : data.video_of_text) videos.push_back(all_videos[j]);
  Trainer trainer(config, data.texts.texts(), std::move(videos));
  if (resume) trainer.restore(*resume);

  std::unique_ptr<std::ofstream> log_file;
  std::ostream& log = open_output(a.log, log_file, out);
  try {
    trainer.run([&](const StepStats& s) { log << format_step(s) << "\n"; });
  } catch (const NumericalError& e) {
    log.flush();
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  }
  log.flush();
  save_checkpoint(trainer.checkpoint(), a.out_checkpoint);
  if (!a.log.empty()) out << "trained " << trainer.step() << " steps; checkpoint " << a.out_checkpoint << "\n";
  return kSuccess;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const PairedData data = load_pair(a.text, a.video);
  const Checkpoint checkpoint = load_checkpoint(a.checkpoint);
  RunConfig config = parse_config(checkpoint.config_text, a.checkpoint);
  config = adopt_dimensions(std::move(config), data.texts, data.videos);
  const ModelConfig model_config = ModelConfig::from(config);
  Rng rng(config.seed);
  ModelParams params = ModelParams::init(model_config, rng);
  params.load(checkpoint);

  GridOptions grid_options;
  grid_options.chunk_size = a.chunk_size.value_or(config.chunk_size);
  grid_options.workers = a.workers.value_or(config.workers);
  const std::vector<TextFeatures> texts = data.texts.texts();
  const std::vector<VideoFeatures> videos = data.videos.videos();
  const ScoreGrid grid = score_grid(params, model_config, texts, videos, grid_options);
  const MetricsReport report = evaluate(grid.final_tensor(), data.video_of_text);

  std::unique_ptr<std::ofstream> file;
  open_output(a.report, file, out) << report.to_text();
  return kSuccess;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  debug::inject_gradient_fault(a.inject_fault);
  std::vector<ComponentReport> reports;
  try {
    reports = run_gradcheck(a.options);
  } catch (...) {
    debug::inject_gradient_fault("");
    throw;
  }
  debug::inject_gradient_fault("");
  bool ok = true;
  char line[160];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-28s max_rel_err %.3e  entries %7zu  %s\n", r.name.c_str(), r.max_rel_error,
                  r.entries, r.passed ? "ok" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  if (!ok) {
    out << "gradcheck failed:";
    for (const auto& r : reports) {
      if (!r.passed) out << " " << r.name;
    }
    out << "\n";
    return kNumericalFailure;
  }
  out << "gradcheck passed (tolerance " << a.options.tolerance << ")\n";
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-conditioned multi-grained contrast scoring for text-video retrieval", "tcmgc"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a paired synthetic embedding corpus");
  synth_cmd->add_option("--seed", synth.spec.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--pairs", synth.spec.pairs, "Number of text-video pairs")->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.spec.d, "Embedding width")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--words", synth.spec.m_max, "Word rows per text")->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frames", synth.spec.n_max, "Frame rows per video")->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.spec.noise, "Per-row noise scale")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--out-text", synth.out_text, "Text archive to write")->required();
  synth_cmd->add_option("--out-video", synth.out_video, "Video archive to write")->required();

  TrainArgs train;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the scoring model on paired archives");
  train_cmd->add_option("--text", train.text, "Text archive")->required();
  train_cmd->add_option("--video", train.video, "Video archive")->required();
  train_cmd->add_option("--config", train.config, "Run configuration file");
  train_cmd->add_option("--out-checkpoint", train.out_checkpoint, "Checkpoint to write")->required();
  train_cmd->add_option("--log", train.log, "Per-step log file (default: stdout)");
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");

  EvalArgs eval;
  std::size_t chunk_size = 0, workers = 1;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Score every pair and write retrieval metrics");
  eval_cmd->add_option("--text", eval.text, "Text archive")->required();
  eval_cmd->add_option("--video", eval.video, "Video archive")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Trained checkpoint")->required();
  auto* chunk_opt = eval_cmd->add_option("--chunk-size", chunk_size, "Texts per chunk (0: all)");
  auto* workers_opt = eval_cmd->add_option("--workers", workers, "Worker threads")->check(CLI::Range(1, 256));
  eval_cmd->add_option("--report", eval.report, "Report file (default: stdout)");
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "Accepted for symmetry; scoring is deterministic");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad_cmd->add_option("--seed", grad.options.seed, "Random seed")->capture_default_str();
  grad_cmd->add_option("--dim", grad.options.dim, "Feature width of the composite checks")->capture_default_str()
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--instances", grad.options.instances, "Random instances per op")->capture_default_str()
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--inject-fault", grad.inject_fault, "Negate the analytic gradient of this op")
      ->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  if (*train_seed_opt) train.seed = train_seed;
  if (*chunk_opt) eval.chunk_size = chunk_size;
  if (*workers_opt) eval.workers = workers;
  if (*eval_seed_opt) eval.seed = eval_seed;

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train_cmd) return cmd_train(train, out, err);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*grad_cmd) return cmd_gradcheck(grad, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace tcmgc::cli
