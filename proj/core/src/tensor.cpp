// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tcmgc/autograd.hpp"
#include "tcmgc/error.hpp"

namespace tcmgc {

namespace {

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

thread_local bool t_grad_mode = true;

std::string& fault_op() {
  static std::string op;
  return op;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const auto r = static_cast<int>(rank);
  const int resolved = axis < 0 ? axis + r : axis;
  if (resolved < 0 || resolved >= r) {
    throw BoundsError("axis " + std::to_string(axis) + " out of range for rank " +
                      std::to_string(rank));
  }
  return static_cast<std::size_t>(resolved);
}

Mask::Mask(Shape shape, std::vector<std::uint8_t> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_numel(shape_)) {
    throw DimensionError("mask of shape " + shape_str(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Mask Mask::ones(Shape shape) {
  const auto n = shape_numel(shape);
  return Mask(std::move(shape), std::vector<std::uint8_t>(n, 1));
}

Mask Mask::prefix(std::span<const std::size_t> valid, std::size_t extent) {
  std::vector<std::uint8_t> values(valid.size() * extent, 0);
  for (std::size_t b = 0; b < valid.size(); ++b) {
    if (valid[b] > extent) throw BoundsError("valid count exceeds extent");
    std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(b * extent), valid[b], 1);
  }
  return Mask({valid.size(), extent}, std::move(values));
}

Mask Mask::reshaped(Shape shape) const {
  if (shape_numel(shape) != values_.size()) {
    throw DimensionError("cannot reshape mask " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Mask(std::move(shape), values_);
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace detail

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " given " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = detail::next_sequence();
  return wrap(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::from_mask(const Mask& mask) {
  std::vector<double> values(mask.data().begin(), mask.data().end());
  return from(mask.shape(), std::move(values));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(int axis) const { return shape()[normalize_axis(axis, rank())]; }

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!node_->is_leaf()) throw ContractError("mutable access to a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t d = 0;
  for (auto i : index) {
    if (i >= s[d]) throw BoundsError("index out of range for " + shape_str(s));
    flat = flat * s[d] + i;
    ++d;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

NoGradGuard::NoGradGuard() : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }
bool grad_mode_enabled() { return t_grad_mode; }

namespace debug {
void inject_gradient_fault(std::string op) { fault_op() = std::move(op); }
const std::string& injected_gradient_fault() { return fault_op(); }
}  // namespace debug

// ---------------------------------------------------------------------------
// Tape

Tape Tape::record(const Tensor& root) {
  Tape tape;
  tape.root_ = root.node_ptr();
  if (!tape.root_ || !tape.root_->requires_grad) return tape;

  std::vector<std::shared_ptr<detail::Node>> stack{tape.root_};
  std::unordered_set<const detail::Node*> seen{tape.root_.get()};
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    for (const auto& parent : node->parents) {
      if (!parent->requires_grad) continue;
      if (!seen.insert(parent.get()).second) continue;
      stack.push_back(parent);
    }
    tape.nodes_.push_back(std::move(node));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });
  return tape;
}

void Tape::replay() {
  if (nodes_.empty()) return;
  for (auto& node : nodes_) {
    if (!node->is_leaf()) node->grad.clear();
  }
  auto& root_grad = root_->ensure_grad();
  root_grad.assign(root_grad.size(), 1.0);

  const std::string& fault = debug::injected_gradient_fault();
  for (auto& node : nodes_) {
    if (node->is_leaf() || node->grad.empty()) continue;
    const bool flip = !fault.empty() && fault == node->op;
    if (flip) {
      for (auto& g : node->grad) g = -g;
    }
    node->backward(*node);
    if (flip) {
      for (auto& g : node->grad) g = -g;
    }
  }
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1 || root.rank() != 0) {
    throw ContractError("backward requires a scalar root, got shape " +
                        (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  Tape::record(root).replay();
}

}  // namespace tcmgc
