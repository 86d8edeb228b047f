#pragma once

// Classical RBM in the +-1 convention, p(v, h) proportional to
// exp(sum b_v v + sum c_h h + sum w_vh v h), trained with persistent
// contrastive divergence.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "ethqbm/adam.hpp"
#include "ethqbm/common.hpp"
#include "ethqbm/eval_data.hpp"

namespace ethqbm {

struct RbmParameters {
  int n_visible = 0;
  int n_hidden = 0;
  std::vector<double> visible_bias;
  std::vector<double> hidden_bias;
  std::vector<double> weights;  // w(v, h) at v * n_hidden + h

  RbmParameters() = default;
  RbmParameters(int nv, int nh)
      : n_visible(nv),
        n_hidden(nh),
        visible_bias(static_cast<std::size_t>(nv), 0.0),
        hidden_bias(static_cast<std::size_t>(nh), 0.0),
        weights(static_cast<std::size_t>(nv * nh), 0.0) {
    require(nv >= 1 && nh >= 0, "RbmParameters: bad unit counts");
  }

  double w(int v, int h) const { return weights[static_cast<std::size_t>(v * n_hidden + h)]; }

  std::size_t size() const { return visible_bias.size() + hidden_bias.size() + weights.size(); }

  /// [visible biases, hidden biases, weights].
  std::vector<double> flat() const {
    std::vector<double> out(visible_bias);
    out.insert(out.end(), hidden_bias.begin(), hidden_bias.end());
    out.insert(out.end(), weights.begin(), weights.end());
    return out;
  }

  void set_flat(std::span<const double> x) {
    require(x.size() == size(), "RbmParameters: flat length mismatch");
    auto it = x.begin();
    for (auto& b : visible_bias) b = *it++;
    for (auto& c : hidden_bias) c = *it++;
    for (auto& wv : weights) wv = *it++;
  }

  void validate() const {
    require(visible_bias.size() == static_cast<std::size_t>(n_visible) &&
                hidden_bias.size() == static_cast<std::size_t>(n_hidden) &&
                weights.size() == static_cast<std::size_t>(n_visible * n_hidden),
            "RbmParameters: shape mismatch");
    for (double x : flat()) require(std::isfinite(x), "RbmParameters: non-finite entry");
  }

  friend bool operator==(const RbmParameters&, const RbmParameters&) = default;
};

/// -(b.v + c.h + v^T W h); Boltzmann weight e^{-energy}.
inline double rbm_energy(const RbmParameters& p, std::span<const int> v, std::span<const int> h) {
  double e = 0.0;
  for (int i = 0; i < p.n_visible; ++i) e -= p.visible_bias[i] * v[i];
  for (int j = 0; j < p.n_hidden; ++j) {
    double a = p.hidden_bias[j];
    for (int i = 0; i < p.n_visible; ++i) a += p.w(i, j) * v[i];
    e -= a * h[j];
  }
  return e;
}

/// Same initialization scheme as the QBM: logit visible biases, small normal
/// hidden biases and weights.
inline RbmParameters init_rbm(int n_visible, int n_hidden, std::span<const double> visible_means, Rng& rng,
                              const InitOptions& opt = {}) {
  require(visible_means.size() == static_cast<std::size_t>(n_visible), "init_rbm: need one mean per visible unit");
  RbmParameters p(n_visible, n_hidden);
  for (int i = 0; i < n_visible; ++i) p.visible_bias[i] = visible_bias_from_mean(visible_means[i], opt.probability_clip);
  for (auto& c : p.hidden_bias) c = normal_with_variance(rng, 0.0, opt.hidden_bias_variance);
  for (auto& w : p.weights) w = normal_with_variance(rng, 0.0, opt.weight_variance);
  return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// c_h + sum_v w_vh v.
inline std::vector<double> hidden_fields(const RbmParameters& p, std::span<const int> v) {
  std::vector<double> a(p.hidden_bias);
  for (int j = 0; j < p.n_hidden; ++j) {
    for (int i = 0; i < p.n_visible; ++i) a[j] += p.w(i, j) * v[i];
  }
  return a;
}

inline std::vector<double> visible_fields(const RbmParameters& p, std::span<const int> h) {
  std::vector<double> a(p.visible_bias);
  for (int i = 0; i < p.n_visible; ++i) {
    for (int j = 0; j < p.n_hidden; ++j) a[i] += p.w(i, j) * h[j];
  }
  return a;
}

inline std::vector<int> sample_spins(std::span<const double> fields, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> s(fields.size());
  for (std::size_t k = 0; k < fields.size(); ++k) s[k] = u(rng) < sigmoid(2.0 * fields[k]) ? 1 : -1;
  return s;
}

struct GibbsSample {
  std::vector<int> hidden;
  std::vector<int> visible;
};

/// h ~ p(h|v), then v' ~ p(v|h).
inline GibbsSample gibbs_step(const RbmParameters& p, std::span<const int> visible, Rng& rng) {
  require(visible.size() == static_cast<std::size_t>(p.n_visible), "gibbs_step: wrong visible length");
  for (int x : visible) require(x == 1 || x == -1, "gibbs_step: spins must be +1 or -1");
  GibbsSample s;
  s.hidden = sample_spins(hidden_fields(p, visible), rng);
  s.visible = sample_spins(visible_fields(p, s.hidden), rng);
  return s;
}

/// Persistent visible chains, one per mini-batch slot.
struct PcdState {
  std::vector<std::vector<int>> chains;

  static PcdState random(int n_chains, int n_visible, Rng& rng) {
    require(n_chains >= 1, "PcdState: need at least one chain");
    std::bernoulli_distribution coin(0.5);
    PcdState s;
    for (int k = 0; k < n_chains; ++k) {
      std::vector<int> v(static_cast<std::size_t>(n_visible));
      for (auto& x : v) x = coin(rng) ? 1 : -1;
      s.chains.push_back(std::move(v));
    }
    return s;
  }

  friend bool operator==(const PcdState&, const PcdState&) = default;
};

namespace detail {

/// Accumulate (v, tanh(a(v)), v tanh(a(v))) into a flat statistics vector.
inline void add_rbm_statistics(const RbmParameters& p, std::span<const int> v, double weight, std::vector<double>& s) {
  const auto a = hidden_fields(p, v);
  std::size_t k = 0;
  for (int i = 0; i < p.n_visible; ++i) s[k++] += weight * v[i];
  for (int j = 0; j < p.n_hidden; ++j) s[k++] += weight * std::tanh(a[j]);
  for (int i = 0; i < p.n_visible; ++i) {
    for (int j = 0; j < p.n_hidden; ++j) s[k++] += weight * v[i] * std::tanh(a[j]);
  }
}

}  // namespace detail

/// Descent direction of the negative log-likelihood for one mini-batch:
/// -(data statistics - chain statistics). Positive statistics use exact hidden
/// means; the chains advance one Gibbs step and supply the negative statistics.
inline std::vector<double> pcd_gradient(const RbmParameters& p, std::span<const std::vector<int>> batch,
                                        PcdState& state, Rng& rng) {
  require(batch.size() == state.chains.size(), "pcd_gradient: batch size must equal the chain count");
  std::vector<double> positive(p.size(), 0.0), negative(p.size(), 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& v : batch) detail::add_rbm_statistics(p, v, w, positive);
  for (auto& chain : state.chains) {
    chain = gibbs_step(p, chain, rng).visible;
    detail::add_rbm_statistics(p, chain, w, negative);
  }
  std::vector<double> grad(p.size());
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = -(positive[k] - negative[k]);
  return grad;
}

/// One PCD step through the shared Adam implementation.
inline void pcd_update(RbmParameters& p, std::span<const std::vector<int>> batch, PcdState& state, AdamState& adam,
                       Rng& rng) {
  const auto grad = pcd_gradient(p, batch, state, rng);
  auto x = p.flat();
  adam_step(adam, x, grad);
  p.set_flat(x);
}

/// Visible marginal by exact summation over the hidden layer,
/// p(v) proportional to e^{b.v} prod_h 2 cosh(c_h + sum_v w_vh v).
inline ProbabilityTable rbm_distribution_exact(const RbmParameters& p) {
  p.validate();
  require(p.n_visible + p.n_hidden <= 20, "rbm_distribution_exact: more than 20 units");
  const std::uint32_t size = std::uint32_t{1} << p.n_visible;
  Eigen::VectorXd log_w(size);
  for (std::uint32_t u = 0; u < size; ++u) {
    const auto v = visible_spins(u, p.n_visible);
    double lw = 0.0;
    for (int i = 0; i < p.n_visible; ++i) lw += p.visible_bias[i] * v[i];
    for (double a : hidden_fields(p, v)) {
      // log(2 cosh a) without overflow
      lw += std::abs(a) + std::log1p(std::exp(-2.0 * std::abs(a)));
    }
    log_w(u) = lw;
  }
  const double shift = log_w.maxCoeff();
  ProbabilityTable t = (log_w.array() - shift).exp().matrix();
  return t / t.sum();
}

/// Joint table over (v, h) with index (v_index << n_h) | h_index; used by the
/// detailed-balance checks.
inline Eigen::VectorXd rbm_joint_exact(const RbmParameters& p) {
  p.validate();
  require(p.n_visible + p.n_hidden <= 20, "rbm_joint_exact: more than 20 units");
  const int n = p.n_visible + p.n_hidden;
  const std::uint32_t size = std::uint32_t{1} << n;
  Eigen::VectorXd log_w(size);
  for (std::uint32_t i = 0; i < size; ++i) {
    const auto v = visible_spins(i >> p.n_hidden, p.n_visible);
    const auto h = visible_spins(i & ((std::uint32_t{1} << p.n_hidden) - 1), p.n_hidden);
    log_w(i) = -rbm_energy(p, v, h);
  }
  const double shift = log_w.maxCoeff();
  Eigen::VectorXd t = (log_w.array() - shift).exp().matrix();
  return t / t.sum();
}

}  // namespace ethqbm
