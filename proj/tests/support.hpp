// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcmgc/representation.hpp"
#include "tcmgc/rng.hpp"
#include "tcmgc/tensor.hpp"

namespace tcmgc::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

/// Values drawn from a small integer grid so ties are common.
inline Tensor tie_heavy_tensor(Rng& rng, Shape shape, int levels = 4) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) * 0.25;
  return Tensor::from(std::move(shape), std::move(v));
}

/// Random mask with at least one valid entry on every last-axis slice.
inline Mask random_mask(Rng& rng, Shape shape, double keep = 0.6) {
  std::vector<std::uint8_t> v(shape_numel(shape));
  const std::size_t last = shape.empty() ? 1 : shape.back();
  for (std::size_t s = 0; s < v.size(); s += last) {
    for (std::size_t j = 0; j < last; ++j) v[s + j] = rng.uniform() < keep ? 1 : 0;
    v[s + rng.below(last)] = 1;
  }
  return Mask(std::move(shape), std::move(v));
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline TextFeatures random_text(Rng& rng, std::size_t d, std::size_t m, std::size_t valid, std::string id = "t") {
  TextFeatures t{std::move(id), random_tensor(rng, {d}), random_tensor(rng, {m, d}), valid};
  return t;
}

inline VideoFeatures random_video(Rng& rng, std::size_t d, std::size_t n, std::size_t valid, std::string id = "v") {
  return {std::move(id), random_tensor(rng, {n, d}), valid};
}

/// Fresh scratch directory under the build tree's temp area.
std::string scratch_dir(const std::string& name);

}  // namespace tcmgc::testing
