// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tcmgc/error.hpp"

namespace tcmgc {

namespace {

using detail::Node;
using Backward = std::function<void(Node&)>;

void check_finite(const char* op, const std::vector<double>& values) {
  if (!finite_checks_enabled()) return;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite output from ") + op);
  }
}

Tensor make_output(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs, Backward backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->seq = detail::next_sequence();
  bool needs_grad = false;
  if (grad_mode_enabled()) {
    for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(node));
}

Tensor make_output_n(const char* op, Shape shape, std::vector<double> value,
                     std::span<const Tensor> inputs, Backward backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->seq = detail::next_sequence();
  const bool needs_grad = grad_mode_enabled() &&
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(node));
}

// Parent gradient buffer, or nullptr when that parent needs none.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

// Row-major strides of `shape`, expanded per-dimension; broadcast dims get 0.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

bool plan_broadcast(const Shape& a, const Shape& b, Broadcast& plan) {
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);
  std::size_t sa = 1;
  std::size_t sb = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t d = rank - 1 - r;
    const std::size_t ea = r < a.size() ? a[a.size() - 1 - r] : 1;
    const std::size_t eb = r < b.size() ? b[b.size() - 1 - r] : 1;
    if (ea != eb && ea != 1 && eb != 1) return false;
    plan.out[d] = std::max(ea, eb);
    if (ea == 0 || eb == 0) plan.out[d] = 0;
    plan.stride_a[d] = ea == 1 ? 0 : sa;
    plan.stride_b[d] = eb == 1 ? 0 : sb;
    sa *= ea;
    sb *= eb;
  }
  return true;
}

Broadcast broadcast_or_throw(const char* op, const Shape& a, const Shape& b) {
  Broadcast plan;
  if (!plan_broadcast(a, b, plan)) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " are not broadcastable");
  }
  return plan;
}

// Calls f(out_index, a_index, b_index) over the broadcast output in row-major order.
template <class F>
void for_each_broadcast(const Broadcast& plan, F&& f) {
  const std::size_t rank = plan.out.size();
  const std::size_t total = shape_numel(plan.out);
  if (total == 0) return;
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = plan.out.back();
  const std::size_t step_a = plan.stride_a.back();
  const std::size_t step_b = plan.stride_b.back();
  const std::size_t outer = total / inner;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off_a = 0;
  std::size_t off_b = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * inner;
    for (std::size_t j = 0; j < inner; ++j) f(base + j, off_a + j * step_a, off_b + j * step_b);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      off_a += plan.stride_a[d];
      off_b += plan.stride_b[d];
      if (idx[d] < plan.out[d]) break;
      off_a -= plan.stride_a[d] * plan.out[d];
      off_b -= plan.stride_b[d] * plan.out[d];
      idx[d] = 0;
    }
  }
}

// Product of extents before, at, and after `axis`.
struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const char* op, BinaryKind kind, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const auto da = a.data();
  const auto db = b.data();

  if (sa == sb) {
    const std::size_t n = da.size();
    std::vector<double> out(n);
    switch (kind) {
      case BinaryKind::kAdd:
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[i];
        break;
      case BinaryKind::kSub:
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[i];
        break;
      case BinaryKind::kMul:
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[i];
        break;
    }
    return make_output(op, sa, std::move(out), {&a, &b}, [kind](Node& self) {
      const std::size_t n = self.grad.size();
      const double* g = self.grad.data();
      if (double* ga = grad_of(self, 0)) {
        if (kind == BinaryKind::kMul) {
          const double* vb = self.parents[1]->value.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (double* gb = grad_of(self, 1)) {
        if (kind == BinaryKind::kMul) {
          const double* va = self.parents[0]->value.data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
        } else if (kind == BinaryKind::kSub) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    });
  }

  Broadcast plan = broadcast_or_throw(op, sa, sb);
  std::vector<double> out(shape_numel(plan.out));
  switch (kind) {
    case BinaryKind::kAdd:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] + db[j]; });
      break;
    case BinaryKind::kSub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] - db[j]; });
      break;
    case BinaryKind::kMul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] * db[j]; });
      break;
  }
  Shape out_shape = plan.out;
  return make_output(op, std::move(out_shape), std::move(out), {&a, &b},
                     [kind, plan = std::move(plan)](Node& self) {
                       const double* g = self.grad.data();
                       const double* va = self.parents[0]->value.data();
                       const double* vb = self.parents[1]->value.data();
                       if (double* ga = grad_of(self, 0)) {
                         if (kind == BinaryKind::kMul) {
                           for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                             ga[i] += g[o] * vb[j];
                           });
                         } else {
                           for_each_broadcast(plan,
                                              [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
                         }
                       }
                       if (double* gb = grad_of(self, 1)) {
                         if (kind == BinaryKind::kMul) {
                           for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                             gb[j] += g[o] * va[i];
                           });
                         } else if (kind == BinaryKind::kSub) {
                           for_each_broadcast(plan,
                                              [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; });
                         } else {
                           for_each_broadcast(plan,
                                              [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
                         }
                       }
                     });
}

// Register-blocked kernels. Every output element accumulates its k terms in
// increasing k, so a row's result does not depend on how rows are batched.
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 8;

template <std::size_t Rows, std::size_t Cols>
inline void block_nn(const double* __restrict a, const double* __restrict b, double* __restrict c,
                     std::size_t q, std::size_t r) {
  double acc[Rows][Cols];
  for (std::size_t i = 0; i < Rows; ++i)
    for (std::size_t j = 0; j < Cols; ++j) acc[i][j] = c[i * r + j];
  for (std::size_t k = 0; k < q; ++k) {
    const double* brow = b + k * r;
    for (std::size_t i = 0; i < Rows; ++i) {
      const double av = a[i * q + k];
      for (std::size_t j = 0; j < Cols; ++j) acc[i][j] += av * brow[j];
    }
  }
  for (std::size_t i = 0; i < Rows; ++i)
    for (std::size_t j = 0; j < Cols; ++j) c[i * r + j] = acc[i][j];
}

// Edge tiles: same per-element order, runtime extents.
inline void block_nn_edge(const double* a, const double* b, double* c, std::size_t rows, std::size_t cols,
                          std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = c[i * r + j];
      for (std::size_t k = 0; k < q; ++k) acc += a[i * q + k] * b[k * r + j];
      c[i * r + j] = acc;
    }
  }
}

// Column tiles of 8, then 4, then scalar.
template <std::size_t Rows>
inline void row_block_nn(const double* a, const double* b, double* c, std::size_t q, std::size_t r) {
  std::size_t j = 0;
  for (; j + kColBlock <= r; j += kColBlock) block_nn<Rows, kColBlock>(a, b + j, c + j, q, r);
  if (j + kColBlock / 2 <= r) {
    block_nn<Rows, kColBlock / 2>(a, b + j, c + j, q, r);
    j += kColBlock / 2;
  }
  if (j < r) block_nn_edge(a, b + j, c + j, Rows, r - j, q, r);
}

// C[p x r] += A[p x q] * B[q x r]
void gemm_nn(const double* a, const double* b, double* c, std::size_t p, std::size_t q, std::size_t r) {
  std::size_t i = 0;
  for (; i + kRowBlock <= p; i += kRowBlock) row_block_nn<kRowBlock>(a + i * q, b, c + i * r, q, r);
  for (; i < p; ++i) row_block_nn<1>(a + i * q, b, c + i * r, q, r);
}

// dA[p x q] += dC[p x r] * B[q x r]^T, with `bt` scratch holding B^T.
void gemm_nt(const double* dc, const double* b, double* da, std::size_t p, std::size_t q, std::size_t r,
             std::vector<double>& bt) {
  bt.resize(q * r);
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t j = 0; j < r; ++j) bt[j * q + k] = b[k * r + j];
  }
  gemm_nn(dc, bt.data(), da, p, r, q);
}

template <std::size_t Rows, std::size_t Cols>
inline void block_tn(const double* __restrict a, const double* __restrict dc, double* __restrict db,
                     std::size_t p, std::size_t q, std::size_t r) {
  double acc[Rows][Cols];
  for (std::size_t k = 0; k < Rows; ++k)
    for (std::size_t j = 0; j < Cols; ++j) acc[k][j] = db[k * r + j];
  for (std::size_t i = 0; i < p; ++i) {
    const double* grow = dc + i * r;
    for (std::size_t k = 0; k < Rows; ++k) {
      const double av = a[i * q + k];
      for (std::size_t j = 0; j < Cols; ++j) acc[k][j] += av * grow[j];
    }
  }
  for (std::size_t k = 0; k < Rows; ++k)
    for (std::size_t j = 0; j < Cols; ++j) db[k * r + j] = acc[k][j];
}

inline void block_tn_edge(const double* a, const double* dc, double* db, std::size_t rows, std::size_t cols,
                          std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = db[k * r + j];
      for (std::size_t i = 0; i < p; ++i) acc += a[i * q + k] * dc[i * r + j];
      db[k * r + j] = acc;
    }
  }
}

template <std::size_t Rows>
inline void row_block_tn(const double* a, const double* dc, double* db, std::size_t p, std::size_t q,
                         std::size_t r) {
  std::size_t j = 0;
  for (; j + kColBlock <= r; j += kColBlock) block_tn<Rows, kColBlock>(a, dc + j, db + j, p, q, r);
  if (j + kColBlock / 2 <= r) {
    block_tn<Rows, kColBlock / 2>(a, dc + j, db + j, p, q, r);
    j += kColBlock / 2;
  }
  if (j < r) block_tn_edge(a, dc + j, db + j, Rows, r - j, p, q, r);
}

// dB[q x r] += A[p x q]^T * dC[p x r]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t p, std::size_t q, std::size_t r) {
  std::size_t k = 0;
  for (; k + kRowBlock <= q; k += kRowBlock) row_block_tn<kRowBlock>(a + k, dc, db + k * r, p, q, r);
  for (; k < q; ++k) row_block_tn<1>(a + k, dc, db + k * r, p, q, r);
}

std::vector<double> permute_copy(const std::vector<double>& src, const Shape& in_shape,
                                 std::size_t axis0, std::size_t axis1, Shape& out_shape) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
  out_shape = in_shape;
  std::swap(out_shape[axis0], out_shape[axis1]);
  std::vector<std::size_t> strides = in_strides;  // input stride for each output dim
  std::swap(strides[axis0], strides[axis1]);

  std::vector<double> out(src.size());
  if (out.empty()) return out;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < out.size(); ++o) {
    out[o] = src[off];
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < out_shape[d]) break;
      off -= strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinaryKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinaryKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinaryKind::kMul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] * factor;
  return make_output("scale", x.shape(), std::move(out), {&x}, [factor](Node& self) {
    double* gx = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * factor;
  });
}

Tensor gelu(const Tensor& x) {
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * dx[i] * (1.0 + std::erf(dx[i] * M_SQRT1_2));
  return make_output("gelu", x.shape(), std::move(out), {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    const double* v = self.parents[0]->value.data();
    const double inv_sqrt_2pi = 0.5 * M_2_SQRTPI * M_SQRT1_2;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(v[i] * M_SQRT1_2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v[i] * v[i]);
      gx[i] += self.grad[i] * (cdf + v[i] * pdf);
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t p = sa[sa.size() - 2];
  const std::size_t q = sa[sa.size() - 1];
  const std::size_t r = sb[sb.size() - 1];
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Broadcast plan;
  if (!plan_broadcast(batch_a, batch_b, plan)) {
    throw DimensionError("matmul: batch dimensions of " + shape_str(sa) + " and " + shape_str(sb) +
                         " are not broadcastable");
  }
  Shape out_shape = plan.out;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const double* va = a.data().data();
  const double* vb = b.data().data();

  // A shared right operand lets every left row go through one flat product.
  const bool flat = batch_b.empty() || shape_numel(batch_b) == 1;
  if (flat) {
    gemm_nn(va, vb, out.data(), shape_numel(plan.out) * p, q, r);
  } else {
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      gemm_nn(va + ia * p * q, vb + ib * q * r, out.data() + o * p * r, p, q, r);
    });
  }
  return make_output("matmul", std::move(out_shape), std::move(out), {&a, &b},
                     [plan = std::move(plan), flat, p, q, r](Node& self) {
                       const double* g = self.grad.data();
                       const double* va = self.parents[0]->value.data();
                       const double* vb = self.parents[1]->value.data();
                       double* ga = grad_of(self, 0);
                       double* gb = grad_of(self, 1);
                       std::vector<double> scratch;
                       if (flat) {
                         const std::size_t rows = shape_numel(plan.out) * p;
                         if (ga) gemm_nt(g, vb, ga, rows, q, r, scratch);
                         if (gb) gemm_tn(va, g, gb, rows, q, r);
                         return;
                       }
                       for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         if (ga) gemm_nt(g + o * p * r, vb + ib * q * r, ga + ia * p * q, p, q, r, scratch);
                         if (gb) gemm_tn(va + ia * p * q, g + o * p * r, gb + ib * q * r, p, q, r);
                       });
                     });
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const std::size_t a0 = normalize_axis(axis0, x.rank());
  const std::size_t a1 = normalize_axis(axis1, x.rank());
  Shape out_shape;
  auto out = permute_copy(x.node()->value, x.shape(), a0, a1, out_shape);
  return make_output("transpose", std::move(out_shape), std::move(out), {&x}, [a0, a1](Node& self) {
    double* gx = grad_of(self, 0);
    Shape back_shape;
    const auto g = permute_copy(self.grad, self.shape, a0, a1, back_shape);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_output("reshape", std::move(shape), std::move(out), {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor narrow(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (start + length > s.extent) {
    throw BoundsError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                      ") exceeds extent " + std::to_string(s.extent));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<double> out(s.outer * length * s.inner);
  const double* src = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src + (o * s.extent + start) * s.inner, length * s.inner, out.begin() + o * length * s.inner);
  }
  return make_output("narrow", std::move(out_shape), std::move(out), {&x}, [s, start, length](Node& self) {
    double* gx = grad_of(self, 0);
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = gx + (o * s.extent + start) * s.inner;
      const double* from = g + o * length * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += from[i];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DegenerateError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == ax || s[d] == first[d];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " does not match " + shape_str(first));
    extents.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  const AxisSplit split = split_at(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::size_t offset = o * split.extent * split.inner;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t block = extents[k] * split.inner;
      std::copy_n(parts[k].data().data() + o * block, block, out.begin() + offset);
      offset += block;
    }
  }
  return make_output_n("concat", std::move(out_shape), std::move(out), parts,
                       [split, extents = std::move(extents)](Node& self) {
                         const double* g = self.grad.data();
                         for (std::size_t o = 0; o < split.outer; ++o) {
                           std::size_t offset = o * split.extent * split.inner;
                           for (std::size_t k = 0; k < extents.size(); ++k) {
                             const std::size_t block = extents[k] * split.inner;
                             if (double* gk = grad_of(self, k)) {
                               double* dst = gk + o * block;
                               for (std::size_t i = 0; i < block; ++i) dst[i] += g[offset + i];
                             }
                             offset += block;
                           }
                         }
                       });
}

Mask broadcast_mask(const Mask& mask, const Shape& shape) {
  if (mask.shape() == shape) return mask;
  Broadcast plan;
  if (!plan_broadcast(shape, mask.shape(), plan) || plan.out != shape) {
    throw DimensionError("mask of shape " + shape_str(mask.shape()) + " does not broadcast to " +
                         shape_str(shape));
  }
  std::vector<std::uint8_t> out(shape_numel(shape));
  const auto src = mask.data();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) { out[o] = src[j]; });
  return Mask(shape, std::move(out));
}

namespace {

Tensor softmax_impl(const char* op, const Tensor& x, int axis, const Mask* mask, double factor,
                    bool allow_empty) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  const double* v = x.data().data();
  Mask full;
  const std::uint8_t* m = nullptr;
  if (mask) {
    full = broadcast_mask(*mask, x.shape());
    m = full.data().data();
  }
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const std::size_t at = base + j * s.inner;
        if (m && !m[at]) continue;
        peak = std::max(peak, factor * v[at]);
        any = true;
      }
      if (!any) {
        if (allow_empty) continue;
        throw DegenerateError(std::string(op) + ": every entry of a slice is masked");
      }
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const std::size_t at = base + j * s.inner;
        if (m && !m[at]) continue;
        out[at] = std::exp(factor * v[at] - peak);
        total += out[at];
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  return make_output(op, x.shape(), std::move(out), {&x}, [s, factor](Node& self) {
    double* gx = grad_of(self, 0);
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) dot += y[base + j * s.inner] * g[base + j * s.inner];
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t at = base + j * s.inner;
          gx[at] += factor * y[at] * (g[at] - dot);
        }
      }
    }
  });
}

}  // namespace

Tensor softmax(const Tensor& x, int axis, double factor) {
  return softmax_impl("softmax", x, axis, nullptr, factor, false);
}

Tensor masked_softmax(const Tensor& x, int axis, const Mask& mask, double factor, bool allow_empty) {
  return softmax_impl("softmax", x, axis, &mask, factor, allow_empty);
}

Tensor log_softmax(const Tensor& x, int axis, double factor) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (s.extent == 0) throw DegenerateError("log_softmax: empty axis");
  const double* v = x.data().data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.extent; ++j) peak = std::max(peak, factor * v[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) total += std::exp(factor * v[base + j * s.inner] - peak);
      const double lse = peak + std::log(total);
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] = factor * v[base + j * s.inner] - lse;
    }
  }
  return make_output("log_softmax", x.shape(), std::move(out), {&x}, [s, factor](Node& self) {
    double* gx = grad_of(self, 0);
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double total = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) total += g[base + j * s.inner];
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t at = base + j * s.inner;
          gx[at] += factor * (g[at] - std::exp(y[at]) * total);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (d == 0) throw DegenerateError("layer_norm: empty normalized axis");
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: affine shapes " + shape_str(gamma.shape()) + " / " +
                         shape_str(beta.shape()) + " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const double* v = x.data().data();
  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gm[j] + bt[j];
    }
  }
  return make_output("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                     [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const double* g = self.grad.data();
                       const double* gm = self.parents[1]->value.data();
                       double* gx = grad_of(self, 0);
                       double* ggamma = grad_of(self, 1);
                       double* gbeta = grad_of(self, 2);
                       const double n = static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g + r * d;
                         const double* hr = xhat.data() + r * d;
                         if (ggamma) {
                           for (std::size_t j = 0; j < d; ++j) ggamma[j] += gr[j] * hr[j];
                         }
                         if (gbeta) {
                           for (std::size_t j = 0; j < d; ++j) gbeta[j] += gr[j];
                         }
                         if (gx) {
                           double sum_dh = 0.0;
                           double sum_dh_h = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dh = gr[j] * gm[j];
                             sum_dh += dh;
                             sum_dh_h += dh * hr[j];
                           }
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dh = gr[j] * gm[j];
                             gx[r * d + j] += inv_std[r] / n * (n * dh - sum_dh - hr[j] * sum_dh_h);
                           }
                         }
                       }
                     });
}

namespace {

Tensor l2_normalize_impl(const Tensor& x, const Mask* valid_rows) {
  if (x.rank() == 0) throw DimensionError("l2_normalize: scalar input");
  const std::size_t d = x.shape().back();
  if (d == 0) throw DegenerateError("l2_normalize: empty axis");
  const std::size_t rows = x.numel() / d;
  Mask rows_mask;
  const std::uint8_t* m = nullptr;
  if (valid_rows) {
    rows_mask = broadcast_mask(*valid_rows, Shape(x.shape().begin(), x.shape().end() - 1));
    m = rows_mask.data().data();
  }
  const double* v = x.data().data();
  std::vector<double> out(x.numel(), 0.0);
  std::vector<double> norms(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (m && !m[r]) continue;
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += v[r * d + j] * v[r * d + j];
    const double norm = std::sqrt(ss);
    if (!std::isfinite(norm)) throw NumericalError("l2_normalize: non-finite vector");
    if (!(norm > 0.0)) throw DegenerateError("l2_normalize: zero-norm vector");
    norms[r] = norm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = v[r * d + j] / norm;
  }
  return make_output("l2_normalize", x.shape(), std::move(out), {&x},
                     [d, rows, norms = std::move(norms)](Node& self) {
                       double* gx = grad_of(self, 0);
                       const double* y = self.value.data();
                       const double* g = self.grad.data();
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (norms[r] == 0.0) continue;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < d; ++j) dot += y[r * d + j] * g[r * d + j];
                         for (std::size_t j = 0; j < d; ++j) {
                           gx[r * d + j] += (g[r * d + j] - y[r * d + j] * dot) / norms[r];
                         }
                       }
                     });
}

IndexTensor topk_impl(const Tensor& x, std::size_t k, int axis, const Mask* mask) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (k < 1 || k > s.extent) {
    throw BoundsError("topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(s.extent) + "]");
  }
  Mask full;
  const std::uint8_t* m = nullptr;
  if (mask) {
    full = broadcast_mask(*mask, x.shape());
    m = full.data().data();
  }
  const double* v = x.data().data();
  IndexTensor result;
  result.shape = x.shape();
  result.shape[ax] = k;
  result.data.resize(s.outer * k * s.inner);
  std::vector<std::size_t> order(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      auto before = [&](std::size_t a, std::size_t b) {
        const bool va = !m || m[base + a * s.inner];
        const bool vb = !m || m[base + b * s.inner];
        if (va != vb) return va;
        if (!va) return false;
        return v[base + a * s.inner] > v[base + b * s.inner];
      };
      std::iota(order.begin(), order.end(), 0);
      if (s.extent <= 32) {
        // Insertion sort: stable, and no scratch buffer for the short axes seen here.
        for (std::size_t j = 1; j < s.extent; ++j) {
          const std::size_t key = order[j];
          std::size_t at = j;
          for (; at > 0 && before(key, order[at - 1]); --at) order[at] = order[at - 1];
          order[at] = key;
        }
      } else {
        std::stable_sort(order.begin(), order.end(), before);
      }
      for (std::size_t j = 0; j < k; ++j) result.data[(o * k + j) * s.inner + i] = order[j];
    }
  }
  return result;
}

void check_gather(const Shape& x_shape, const IndexTensor& indices, std::size_t ax) {
  bool ok = indices.shape.size() == x_shape.size() && indices.data.size() == shape_numel(indices.shape);
  for (std::size_t d = 0; ok && d < x_shape.size(); ++d) ok = d == ax || indices.shape[d] == x_shape[d];
  if (!ok) {
    throw DimensionError("gather: index shape " + shape_str(indices.shape) + " incompatible with " +
                         shape_str(x_shape));
  }
  for (auto i : indices.data) {
    if (i >= x_shape[ax]) {
      throw BoundsError("gather: index " + std::to_string(i) + " out of range for extent " +
                        std::to_string(x_shape[ax]));
    }
  }
}

}  // namespace

Tensor l2_normalize(const Tensor& x) { return l2_normalize_impl(x, nullptr); }
Tensor l2_normalize(const Tensor& x, const Mask& valid_rows) { return l2_normalize_impl(x, &valid_rows); }

IndexTensor topk_indices(const Tensor& x, std::size_t k, int axis) { return topk_impl(x, k, axis, nullptr); }
IndexTensor topk_indices(const Tensor& x, std::size_t k, int axis, const Mask& mask) {
  return topk_impl(x, k, axis, &mask);
}

Tensor gather(const Tensor& x, const IndexTensor& indices, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  check_gather(x.shape(), indices, ax);
  const AxisSplit src = split_at(x.shape(), ax);
  const AxisSplit dst = split_at(indices.shape, ax);
  const double* v = x.data().data();
  std::vector<double> out(indices.data.size());
  for (std::size_t o = 0; o < dst.outer; ++o) {
    for (std::size_t j = 0; j < dst.extent; ++j) {
      for (std::size_t i = 0; i < dst.inner; ++i) {
        const std::size_t at = (o * dst.extent + j) * dst.inner + i;
        out[at] = v[(o * src.extent + indices.data[at]) * src.inner + i];
      }
    }
  }
  return make_output("gather", indices.shape, std::move(out), {&x}, [src, dst, idx = indices.data](Node& self) {
    double* gx = grad_of(self, 0);
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < dst.outer; ++o) {
      for (std::size_t j = 0; j < dst.extent; ++j) {
        for (std::size_t i = 0; i < dst.inner; ++i) {
          const std::size_t at = (o * dst.extent + j) * dst.inner + i;
          gx[(o * src.extent + idx[at]) * src.inner + i] += g[at];
        }
      }
    }
  });
}

Mask gather(const Mask& mask, const IndexTensor& indices, int axis) {
  const std::size_t ax = normalize_axis(axis, mask.shape().size());
  check_gather(mask.shape(), indices, ax);
  const AxisSplit src = split_at(mask.shape(), ax);
  const AxisSplit dst = split_at(indices.shape, ax);
  std::vector<std::uint8_t> out(indices.data.size());
  const auto m = mask.data();
  for (std::size_t o = 0; o < dst.outer; ++o) {
    for (std::size_t j = 0; j < dst.extent; ++j) {
      for (std::size_t i = 0; i < dst.inner; ++i) {
        const std::size_t at = (o * dst.extent + j) * dst.inner + i;
        out[at] = m[(o * src.extent + indices.data[at]) * src.inner + i];
      }
    }
  }
  return Mask(indices.shape, std::move(out));
}

Tensor reduce(const Tensor& x, int axis, ReduceKind kind) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (s.extent == 0) throw DegenerateError("reduce: empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  const double* v = x.data().data();
  const double n = static_cast<double>(s.extent);
  std::vector<double> out(s.outer * s.inner, 0.0);
  std::vector<double> means;
  if (kind != ReduceKind::kSum) means.assign(out.size(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) total += v[base + j * s.inner];
      const std::size_t at = o * s.inner + i;
      if (kind == ReduceKind::kSum) {
        out[at] = total;
        continue;
      }
      const double mu = total / n;
      means[at] = mu;
      if (kind == ReduceKind::kMean) {
        out[at] = mu;
        continue;
      }
      double ss = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const double dev = v[base + j * s.inner] - mu;
        ss += dev * dev;
      }
      out[at] = ss / n;
    }
  }
  const char* op = kind == ReduceKind::kSum ? "sum" : kind == ReduceKind::kMean ? "mean" : "variance";
  return make_output(op, std::move(out_shape), std::move(out), {&x},
                     [s, kind, n, means = std::move(means)](Node& self) {
                       double* gx = grad_of(self, 0);
                       const double* g = self.grad.data();
                       const double* v = self.parents[0]->value.data();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t at = o * s.inner + i;
                           const std::size_t base = o * s.extent * s.inner + i;
                           for (std::size_t j = 0; j < s.extent; ++j) {
                             const std::size_t k = base + j * s.inner;
                             switch (kind) {
                               case ReduceKind::kSum:
                                 gx[k] += g[at];
                                 break;
                               case ReduceKind::kMean:
                                 gx[k] += g[at] / n;
                                 break;
                               case ReduceKind::kVariance:
                                 gx[k] += g[at] * 2.0 * (v[k] - means[at]) / n;
                                 break;
                             }
                           }
                         }
                       }
                     });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_output("sum", {}, {total}, {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
  });
}

}  // namespace tcmgc
