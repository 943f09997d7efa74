// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tcmgc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Resolves a possibly negative axis against `rank`; throws BoundsError.
std::size_t normalize_axis(int axis, std::size_t rank);

/// Boolean tensor; true marks a valid (unmasked) entry. Broadcasts like Tensor.
class Mask {
 public:
  Mask() = default;
  Mask(Shape shape, std::vector<std::uint8_t> values);

  static Mask ones(Shape shape);
  /// Rows [0, valid[b]) of each batch entry `b` are set; shape is {valid.size(), extent}.
  static Mask prefix(std::span<const std::size_t> valid, std::size_t extent);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const std::uint8_t> data() const noexcept { return values_; }
  std::span<std::uint8_t> mutable_data() noexcept { return values_; }
  bool empty() const noexcept { return values_.empty(); }

  Mask reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<std::uint8_t> values_;
};

/// Integer tensor of positions, produced by selection ops. Never differentiable.
struct IndexTensor {
  Shape shape;
  std::vector<std::size_t> data;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad();
};

std::uint64_t next_sequence();

}  // namespace detail

/// Shared handle to a dense row-major array of doubles that may take part in
/// reverse-mode differentiation. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_mask(const Mask& mask);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access; only valid for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Value copy with no graph history.
  Tensor detach() const;
  const char* op_name() const;

  detail::Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Output validation: when enabled, every op throws NumericalError on a
/// non-finite result. Defaults to on in builds without NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// While alive, ops on this thread record no graph history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

namespace debug {
/// Negates the analytic gradient produced by every op named `op`. Used to
/// prove the gradient checker detects faults. Pass an empty name to clear.
void inject_gradient_fault(std::string op);
const std::string& injected_gradient_fault();
}  // namespace debug

}  // namespace tcmgc
