#pragma once

// Adam shared by the QBM and RBM trainers.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ethqbm/common.hpp"

namespace ethqbm {

struct AdamHyper {
  double alpha = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct AdamState {
  AdamHyper hyper;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t size, AdamHyper h) : hyper(h), m(size, 0.0), v(size, 0.0) {
    require(h.alpha > 0.0, "AdamState: learning rate must be positive");
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected descent step, params -= alpha * m_hat / (sqrt(v_hat) + eps).
/// Returns the applied delta. A non-finite gradient leaves state and params
/// untouched and throws.
inline std::vector<double> adam_step(AdamState& state, std::span<double> params, std::span<const double> grad) {
  require(params.size() == state.m.size() && grad.size() == state.m.size(), "adam_step: size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("adam_step: non-finite gradient component " + std::to_string(i) + ", step rejected");
    }
  }
  const auto& h = state.hyper;
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  std::vector<double> delta(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * grad[i];
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    delta[i] = -h.alpha * m_hat / (std::sqrt(v_hat) + h.epsilon);
    params[i] += delta[i];
  }
  return delta;
}

}  // namespace ethqbm
