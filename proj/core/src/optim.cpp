// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/optim.hpp"

#include <cmath>
#include <string>

#include "tcmgc/error.hpp"

namespace tcmgc {

double cosine_rate(double base, std::uint64_t step, std::uint64_t horizon) {
  if (horizon == 0 || step >= horizon) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(horizon);
  return base * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.first.empty() && state.second.empty()) {
    for (const Tensor& p : params) {
      state.first.emplace_back(p.numel(), 0.0);
      state.second.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw DimensionError("adam_step: state holds " + std::to_string(state.first.size()) +
                         " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first[i].size() != params[i].numel() || state.second[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: moment size mismatch for parameter of shape " +
                           shape_str(params[i].shape()));
    }
  }

  const double rate = cosine_rate(state.base_lr, state.step, state.horizon);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) continue;
    auto value = p.mutable_data();
    const auto grad = p.grad();
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
  return rate;
}

}  // namespace tcmgc
