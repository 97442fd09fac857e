#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;

  // Zero moments shaped like `params`.
  template <typename Params>
  explicit AdamState(const Params& params) {
    for (const Tensor* p : params) {
      first_moment.emplace_back(p->rows(), p->cols());
      second_moment.emplace_back(p->rows(), p->cols());
    }
  }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr) {
  require(lr > 0.0, "adam_step: lr must be > 0");
  require(params.size() == grads.size(), "adam_step: params/grads count mismatch");
  require(params.size() == state.first_moment.size(), "adam_step: state does not match params");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam_step");
    require_same_shape(*params[k], state.first_moment[k], "adam_step");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace shiftguard
