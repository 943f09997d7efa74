// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/synthetic.hpp"

#include <cstdio>

#include "tcmgc/error.hpp"
#include "tcmgc/rng.hpp"

namespace tcmgc {

namespace {

std::uint32_t draw_length(Rng& rng, std::size_t max_len) {
  const std::size_t lo = (max_len + 1) / 2;
  return static_cast<std::uint32_t>(lo + rng.below(max_len - lo + 1));
}

void perturb(Rng& rng, const std::vector<double>& latent, double noise, float* out) {
  for (std::size_t i = 0; i < latent.size(); ++i) out[i] = static_cast<float>(latent[i] + noise * rng.normal());
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.pairs == 0) throw ConfigError("pairs must be at least 1");
  if (spec.d == 0 || spec.m_max == 0 || spec.n_max == 0) throw ConfigError("dimensions must be positive");
  if (!(spec.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  Rng rng(spec.seed);
  SyntheticCorpus corpus;
  corpus.texts = {ArchiveKind::kText, static_cast<std::uint32_t>(spec.d), static_cast<std::uint32_t>(spec.m_max), {}};
  corpus.videos = {ArchiveKind::kVideo, static_cast<std::uint32_t>(spec.d), static_cast<std::uint32_t>(spec.n_max), {}};
  std::vector<double> latent(spec.d);
  for (std::size_t p = 0; p < spec.pairs; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "pair%05zu", p);
    for (auto& v : latent) v = rng.normal();

    ArchiveItem text{id, draw_length(rng, spec.m_max), std::vector<float>(spec.d),
                     std::vector<float>(spec.m_max * spec.d, 0.0f)};
    ArchiveItem video{id, draw_length(rng, spec.n_max), {}, std::vector<float>(spec.n_max * spec.d, 0.0f)};
    perturb(rng, latent, spec.noise, text.sentence.data());
    for (std::size_t j = 0; j < text.valid_len; ++j) perturb(rng, latent, spec.noise, &text.sequence[j * spec.d]);
    for (std::size_t j = 0; j < video.valid_len; ++j) perturb(rng, latent, spec.noise, &video.sequence[j * spec.d]);
    corpus.texts.items.push_back(std::move(text));
    corpus.videos.items.push_back(std::move(video));
  }
  return corpus;
}

}  // namespace tcmgc
