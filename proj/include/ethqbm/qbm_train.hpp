#pragma once

// QBM losses and their gradients with respect to the trainable biases and
// weights. Positive phases are computed exactly on the clamped hidden space;
// negative phases come from either an exact Gibbs state or a quench estimate.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/eval_data.hpp"
#include "ethqbm/spectral.hpp"
#include "ethqbm/spin_ops.hpp"
#include "ethqbm/thermal.hpp"

namespace ethqbm {

/// H_QBM and the gradient observables on the QBM sites alone.
struct QbmBlock {
  SystemLayout layout;  // the QBM without thermometer
  PauliSum hamiltonian;
  std::vector<PauliSum> observables;  // trainable order
};

inline QbmBlock make_qbm_block(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p) {
  QbmBlock b;
  b.layout = layout.without_thermometer();
  b.hamiltonian = qbm_block(layout, spec, p);
  b.observables = trainable_observables(layout, spec, layout.qbm_size());
  return b;
}

struct WeightedVisible {
  std::uint32_t index = 0;
  double weight = 0.0;
};

/// Nonzero entries of a table.
inline std::vector<WeightedVisible> table_support(const ProbabilityTable& table) {
  std::vector<WeightedVisible> out;
  for (Eigen::Index u = 0; u < table.size(); ++u) {
    if (table(u) > 0.0) out.push_back({static_cast<std::uint32_t>(u), table(u)});
  }
  return out;
}

/// Mini-batch as weights 1/|batch| with duplicates merged (ascending index).
inline std::vector<WeightedVisible> batch_weights(std::span<const std::uint32_t> batch) {
  require(!batch.empty(), "batch_weights: empty batch");
  std::map<std::uint32_t, double> acc;
  for (auto u : batch) acc[u] += 1.0 / static_cast<double>(batch.size());
  std::vector<WeightedVisible> out;
  for (const auto& [u, w] : acc) out.push_back({u, w});
  return out;
}

/// Thermal statistics of the clamped Hamiltonian H_z at inverse temperature beta.
struct ClampedStatistics {
  std::vector<double> observables;  // <O_theta>_z
  double energy = 0.0;              // <H_z>_z, offset included
  double log_trace = 0.0;           // ln tr e^{-beta H_z}
};

inline ClampedStatistics clamped_statistics(const QbmBlock& block, std::uint32_t z_index, double beta) {
  const auto z = visible_spins(z_index, block.layout.n_visible());
  const ClampedOperator h = clamp_visible(block.hamiltonian, block.layout, z);
  const EigenSystem eig = eig_hermitian(h.reduced.to_dense());
  const GibbsEnsemble g = gibbs_weights(eig.values, beta);
  ClampedStatistics s;
  s.log_trace = -beta * h.offset + g.log_partition;
  s.energy = h.offset + g.probabilities.dot(eig.values);
  for (const auto& op : block.observables) {
    const ClampedOperator c = clamp_visible(op, block.layout, z);
    s.observables.push_back(c.offset + g.probabilities.dot(eigenstate_expectations(c.reduced, eig)));
  }
  return s;
}

struct LossValue {
  double value = 0.0;
  bool infinite = false;  // the model gives zero probability to a data configuration
};

/// -sum p_data ln p_beta(z_v) with the exact visible marginal of e^{-beta H_QBM}.
inline LossValue loss_exact(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p, double beta,
                            const ProbabilityTable& p_data) {
  require(p_data.size() == (Eigen::Index{1} << layout.n_visible()), "loss_exact: data table size");
  check_normalized(p_data, "loss_exact");
  const ProbabilityTable model = qbm_visible_table(layout, spec, p, beta);
  LossValue out;
  for (Eigen::Index u = 0; u < p_data.size(); ++u) {
    if (p_data(u) == 0.0) continue;
    if (model(u) <= 0.0) {
      out.infinite = true;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
    out.value -= p_data(u) * std::log(model(u));
  }
  return out;
}

/// -sum p_data ln[tr e^{-beta H_z} / tr e^{-beta H_QBM}].
inline double loss_upper(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p, double beta,
                         const ProbabilityTable& p_data) {
  require(p_data.size() == (Eigen::Index{1} << layout.n_visible()), "loss_upper: data table size");
  check_normalized(p_data, "loss_upper");
  const QbmBlock block = make_qbm_block(layout, spec, p);
  const EigenSystem eig = eig_hermitian(block.hamiltonian.to_dense());
  const double log_z = gibbs_weights(eig.values, beta).log_partition;
  double loss = 0.0;
  for (const auto& [u, w] : table_support(p_data)) {
    const ClampedOperator h = clamp_visible(block.hamiltonian, block.layout, visible_spins(u, layout.n_visible()));
    const EigenSystem ez = eig_hermitian(h.reduced.to_dense());
    loss -= w * (-beta * h.offset + gibbs_weights(ez.values, beta).log_partition - log_z);
  }
  return loss;
}

/// Data-averaged clamped statistics.
struct PhaseStatistics {
  std::vector<double> observables;
  double energy = 0.0;
};

inline PhaseStatistics positive_phase(const QbmBlock& block, std::span<const WeightedVisible> data, double beta) {
  PhaseStatistics out;
  out.observables.assign(block.observables.size(), 0.0);
  for (const auto& [u, w] : data) {
    const auto s = clamped_statistics(block, u, beta);
    for (std::size_t k = 0; k < s.observables.size(); ++k) out.observables[k] += w * s.observables[k];
    out.energy += w * s.energy;
  }
  return out;
}

/// Gibbs expectations of the gradient observables and of H_QBM on the QBM block.
inline PhaseStatistics exact_negative_phase(const QbmBlock& block, const EigenSystem& eig, double beta) {
  const GibbsEnsemble g = gibbs_ensemble(eig, beta);
  PhaseStatistics out;
  for (const auto& op : block.observables) out.observables.push_back(g.probabilities.dot(eigenstate_expectations(op, eig)));
  out.energy = g.probabilities.dot(eig.values);
  return out;
}

struct GradientEstimate {
  std::vector<double> total;
  std::vector<double> positive;    // beta E_data <O>_z
  std::vector<double> negative;    // -beta <O>_model
  std::vector<double> correction;  // g_theta
  double beta = 0.0;
};

/// d L~ / d theta = beta (E_data <O>_z - <O>_model) + g_theta with
/// g_theta = (d beta / d theta) (E_data <H_z>_z - <H_QBM>_model).
/// An empty `dbeta_dtheta` means beta does not depend on theta.
inline GradientEstimate assemble_gradient(const PhaseStatistics& positive, const PhaseStatistics& negative, double beta,
                                          std::span<const double> dbeta_dtheta = {}) {
  const std::size_t n = positive.observables.size();
  require(negative.observables.size() == n, "assemble_gradient: phase size mismatch");
  require(dbeta_dtheta.empty() || dbeta_dtheta.size() == n, "assemble_gradient: dbeta size mismatch");
  GradientEstimate g;
  g.beta = beta;
  g.total.resize(n);
  g.positive.resize(n);
  g.negative.resize(n);
  g.correction.assign(n, 0.0);
  const double energy_gap = positive.energy - negative.energy;
  for (std::size_t k = 0; k < n; ++k) {
    g.positive[k] = beta * positive.observables[k];
    g.negative[k] = -beta * negative.observables[k];
    if (!dbeta_dtheta.empty()) g.correction[k] = dbeta_dtheta[k] * energy_gap;
    g.total[k] = g.positive[k] + g.negative[k] + g.correction[k];
  }
  return g;
}

/// Exact-backend gradient at fixed beta (no beta correction).
inline GradientEstimate gradient_exact(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p,
                                       double beta, std::span<const WeightedVisible> data) {
  const QbmBlock block = make_qbm_block(layout, spec, p);
  const EigenSystem eig = eig_hermitian(block.hamiltonian.to_dense());
  return assemble_gradient(positive_phase(block, data, beta), exact_negative_phase(block, eig, beta), beta);
}

/// One training step's beta estimate and the parameter change applied after it.
struct BetaStep {
  double beta = 0.0;
  std::vector<double> delta;
};

enum class DbetaEstimator {
  off,
  componentwise,  // d beta / d theta_k = delta beta / delta theta_k
  directional,    // minimum-norm gradient with grad . delta theta = delta beta
};

inline std::string_view to_string(DbetaEstimator e) {
  switch (e) {
    case DbetaEstimator::off: return "off";
    case DbetaEstimator::componentwise: return "componentwise";
    case DbetaEstimator::directional: return "directional";
  }
  return "unknown";
}

inline DbetaEstimator parse_dbeta_estimator(std::string_view s) {
  if (s == "off") return DbetaEstimator::off;
  if (s == "componentwise") return DbetaEstimator::componentwise;
  if (s == "directional") return DbetaEstimator::directional;
  throw InvalidArgument("unknown dbeta estimator: " + std::string(s));
}

/// Finite-difference d beta / d theta from the last two steps. Zero without
/// history; componentwise entries are zero where |delta theta_k| < 1e-12.
inline std::vector<double> estimate_dbeta_dtheta(std::span<const BetaStep> history, std::size_t n_params,
                                                 DbetaEstimator kind = DbetaEstimator::componentwise) {
  std::vector<double> out(n_params, 0.0);
  if (history.size() < 2 || kind == DbetaEstimator::off) return out;
  const auto& prev = history[history.size() - 2];
  const auto& last = history.back();
  require(prev.delta.size() == n_params, "estimate_dbeta_dtheta: delta size mismatch");
  const double d_beta = last.beta - prev.beta;
  if (kind == DbetaEstimator::componentwise) {
    for (std::size_t k = 0; k < n_params; ++k) {
      if (std::abs(prev.delta[k]) >= 1e-12) out[k] = d_beta / prev.delta[k];
    }
    return out;
  }
  double norm2 = 0.0;
  for (double d : prev.delta) norm2 += d * d;
  if (norm2 < 1e-24) return out;
  for (std::size_t k = 0; k < n_params; ++k) out[k] = d_beta * prev.delta[k] / norm2;
  return out;
}

}  // namespace ethqbm
