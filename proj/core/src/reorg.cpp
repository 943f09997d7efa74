// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/reorg.hpp"

#include <cmath>

#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {

namespace {

struct Layout {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

Layout layout_of(const Shape& shape, std::size_t ax) {
  Layout l;
  for (std::size_t d = 0; d < ax; ++d) l.outer *= shape[d];
  l.extent = shape[ax];
  for (std::size_t d = ax + 1; d < shape.size(); ++d) l.inner *= shape[d];
  return l;
}

IndexTensor narrow_index(const IndexTensor& idx, std::size_t ax, std::size_t start, std::size_t length) {
  const Layout l = layout_of(idx.shape, ax);
  IndexTensor out;
  out.shape = idx.shape;
  out.shape[ax] = length;
  out.data.resize(l.outer * length * l.inner);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t j = 0; j < length; ++j) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        out.data[(o * length + j) * l.inner + i] = idx.data[(o * l.extent + start + j) * l.inner + i];
      }
    }
  }
  return out;
}

// Per slice along `ax`: does it hold any valid entry? Shape has `ax` set to 1.
Mask any_valid(const Mask& mask, std::size_t ax) {
  const Layout l = layout_of(mask.shape(), ax);
  Shape shape = mask.shape();
  shape[ax] = 1;
  std::vector<std::uint8_t> out(l.outer * l.inner, 0);
  const auto m = mask.data();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t j = 0; j < l.extent; ++j) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        if (m[(o * l.extent + j) * l.inner + i]) out[o * l.inner + i] = 1;
      }
    }
  }
  return Mask(std::move(shape), std::move(out));
}

Mask concat_masks(const Mask& a, const Mask& b, std::size_t ax) {
  const Layout la = layout_of(a.shape(), ax);
  const Layout lb = layout_of(b.shape(), ax);
  Shape shape = a.shape();
  shape[ax] += b.shape()[ax];
  const std::size_t extent = la.extent + lb.extent;
  std::vector<std::uint8_t> out(la.outer * extent * la.inner);
  for (std::size_t o = 0; o < la.outer; ++o) {
    for (std::size_t j = 0; j < extent; ++j) {
      for (std::size_t i = 0; i < la.inner; ++i) {
        out[(o * extent + j) * la.inner + i] =
            j < la.extent ? a.data()[(o * la.extent + j) * la.inner + i]
                          : b.data()[(o * lb.extent + j - la.extent) * lb.inner + i];
      }
    }
  }
  return Mask(std::move(shape), std::move(out));
}

std::size_t count_padded(const Mask& selected, const Mask& slice_any, std::size_t ax) {
  const Layout l = layout_of(selected.shape(), ax);
  std::size_t count = 0;
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      if (!slice_any.data()[o * l.inner + i]) continue;
      for (std::size_t j = 0; j < l.extent; ++j) count += selected.data()[(o * l.extent + j) * l.inner + i] == 0;
    }
  }
  return count;
}

}  // namespace

ReorgMode parse_reorg_mode(const std::string& text) {
  if (text == "none") return ReorgMode::kNone;
  if (text == "removal") return ReorgMode::kRemoval;
  if (text == "fusion") return ReorgMode::kFusion;
  throw ConfigError("unknown reorganization mode '" + text + "' (expected none, removal or fusion)");
}

const char* to_string(ReorgMode mode) {
  switch (mode) {
    case ReorgMode::kNone:
      return "none";
    case ReorgMode::kRemoval:
      return "removal";
    case ReorgMode::kFusion:
      return "fusion";
  }
  return "none";
}

std::size_t keep_count(std::size_t m, double keep_rate) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
    throw ConfigError("keep_rate = " + std::to_string(keep_rate) + " outside (0, 1]");
  }
  if (m == 0) throw BoundsError("keep_count: length must be positive");
  const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(m) * keep_rate));
  return std::max<std::size_t>(1, std::min(k, m));
}

std::size_t reorganized_extent(std::size_t m, std::size_t k, ReorgMode mode) {
  switch (mode) {
    case ReorgMode::kNone:
      return m;
    case ReorgMode::kRemoval:
      return k;
    case ReorgMode::kFusion:
      return k + 1;
  }
  return m;
}

Reorganized reorganize(const Tensor& x, const Mask& mask, int axis, std::size_t k, ReorgMode mode,
                       bool allow_empty) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const std::size_t extent = x.shape()[ax];
  const Mask full = broadcast_mask(mask, x.shape());
  const Mask slice_any = any_valid(full, ax);
  if (!allow_empty) {
    for (auto v : slice_any.data()) {
      if (!v) throw DegenerateError("reorganize: a slice has no valid entries");
    }
  }
  if (mode == ReorgMode::kNone) return {x, full, 0, {}, {}};
  if (mode == ReorgMode::kFusion && k >= extent) {
    throw ConfigError("fusion keeps k = " + std::to_string(k) + " of " + std::to_string(extent) +
                      " entries, leaving nothing to fuse");
  }

  const IndexTensor order = topk_indices(x, mode == ReorgMode::kRemoval ? k : extent, static_cast<int>(ax), full);
  const IndexTensor head_idx = mode == ReorgMode::kRemoval ? order : narrow_index(order, ax, 0, k);
  Reorganized out;
  out.values = gather(x, head_idx, static_cast<int>(ax));
  out.valid = gather(full, head_idx, static_cast<int>(ax));
  out.pad_selected = count_padded(out.valid, slice_any, ax);
  out.selected = head_idx;
  if (mode == ReorgMode::kRemoval) return out;

  const IndexTensor tail_idx = narrow_index(order, ax, k, extent - k);
  const Tensor tail = gather(x, tail_idx, static_cast<int>(ax));
  const Mask tail_valid = gather(full, tail_idx, static_cast<int>(ax));
  const Tensor weights = masked_softmax(tail, static_cast<int>(ax), tail_valid, 1.0, true);
  Shape fused_shape = x.shape();
  fused_shape[ax] = 1;
  const Tensor fused = reshape(sum(mul(weights, tail), static_cast<int>(ax)), fused_shape);
  const Tensor parts[] = {out.values, fused};
  out.values = concat(parts, static_cast<int>(ax));
  out.valid = concat_masks(out.valid, any_valid(tail_valid, ax), ax);
  return out;
}

Reorganized sr_video_word(const Tensor& v, const Mask& mask, std::size_t k) {
  return reorganize(v, mask, -1, k, ReorgMode::kRemoval);
}

Reorganized sr_sentence_frame(const Tensor& v, const Mask& mask, std::size_t k) {
  return reorganize(v, mask, -1, k, ReorgMode::kFusion);
}

Reorganized bi_sr(const Tensor& m, const Mask& row_mask, const Mask& col_mask, std::size_t k_cols,
                  ReorgMode col_mode, std::size_t k_rows, ReorgMode row_mode) {
  if (m.rank() < 2) throw DimensionError("bi_sr: expected a matrix, got " + shape_str(m.shape()));
  const Shape& s = m.shape();
  const std::size_t rows = s[s.size() - 2];
  const std::size_t cols = s[s.size() - 1];
  Shape col_shape(s.begin(), s.end() - 2);
  col_shape.push_back(1);
  col_shape.push_back(cols);
  Shape row_shape(s.begin(), s.end() - 2);
  row_shape.push_back(rows);
  row_shape.push_back(1);
  const Mask cols_full = broadcast_mask(col_mask, col_shape);
  const Mask rows_full = broadcast_mask(row_mask, row_shape);

  Reorganized stage1 = reorganize(m, cols_full, -1, k_cols, col_mode);
  const Shape& s1 = stage1.values.shape();
  const Mask rows_b = broadcast_mask(rows_full, s1);
  std::vector<std::uint8_t> combined(stage1.valid.data().begin(), stage1.valid.data().end());
  for (std::size_t i = 0; i < combined.size(); ++i) combined[i] = combined[i] && rows_b.data()[i];
  Reorganized stage2 = reorganize(stage1.values, Mask(s1, std::move(combined)), -2, k_rows, row_mode, true);
  stage2.pad_selected += stage1.pad_selected;
  stage2.first_stage = std::move(stage1.selected);
  return stage2;
}

Reorganized bi_sr_frame_word(const Tensor& m, const Mask& row_mask, const Mask& col_mask, std::size_t k) {
  return bi_sr(m, row_mask, col_mask, k, ReorgMode::kRemoval, k, ReorgMode::kRemoval);
}

}  // namespace tcmgc
