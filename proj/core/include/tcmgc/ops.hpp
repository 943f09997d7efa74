// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor gelu(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// Batched matrix product: [.., p, q] x [.., q, r] -> [.., p, r]; batch dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor reshape(const Tensor& x, Shape shape);
/// Slice `[start, start + length)` along `axis`.
Tensor narrow(const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, int axis);

/// softmax(scale * x) along `axis`. Masked entries get probability exactly 0.
/// A fully masked slice throws DegenerateError unless `allow_empty`, in
/// which case it yields all zeros.
Tensor softmax(const Tensor& x, int axis, double scale = 1.0);
Tensor masked_softmax(const Tensor& x, int axis, const Mask& mask, double scale = 1.0,
                      bool allow_empty = false);
Tensor log_softmax(const Tensor& x, int axis, double scale = 1.0);

/// Normalizes over the last axis, then applies gamma/beta of shape [d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// L2-normalizes along the last axis. Rows marked invalid in `valid_rows`
/// (shape broadcastable to x.shape[:-1]) become zero; a valid zero row throws.
Tensor l2_normalize(const Tensor& x);
Tensor l2_normalize(const Tensor& x, const Mask& valid_rows);

/// Positions of the k largest entries along `axis`, in descending value
/// order. Ties go to the smaller index; masked entries rank after all valid
/// ones, in index order.
IndexTensor topk_indices(const Tensor& x, std::size_t k, int axis);
IndexTensor topk_indices(const Tensor& x, std::size_t k, int axis, const Mask& mask);

/// out[.., j, ..] = x[.., indices[.., j, ..], ..] along `axis`.
Tensor gather(const Tensor& x, const IndexTensor& indices, int axis);
Mask gather(const Mask& mask, const IndexTensor& indices, int axis);

enum class ReduceKind { kSum, kMean, kVariance };

/// Reduces `axis` away. Variance is the population variance.
Tensor reduce(const Tensor& x, int axis, ReduceKind kind);
inline Tensor sum(const Tensor& x, int axis) { return reduce(x, axis, ReduceKind::kSum); }
inline Tensor mean(const Tensor& x, int axis) { return reduce(x, axis, ReduceKind::kMean); }
inline Tensor variance(const Tensor& x, int axis) { return reduce(x, axis, ReduceKind::kVariance); }
Tensor sum_all(const Tensor& x);

/// Materializes `mask` broadcast to `shape`.
Mask broadcast_mask(const Mask& mask, const Shape& shape);

}  // namespace tcmgc
