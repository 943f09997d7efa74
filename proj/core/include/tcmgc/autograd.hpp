// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// Execution-ordered record of the ops that contribute to a root tensor.
/// Built by walking the graph from the root; ordering follows creation
/// sequence, so reverse replay visits every consumer before its inputs.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Seeds d(root)/d(root) = 1 and accumulates gradients into every
  /// requires_grad leaf reachable from the root.
  void replay();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Reverse-mode pass from a scalar root. Throws ContractError otherwise.
void backward(const Tensor& root);

}  // namespace tcmgc
