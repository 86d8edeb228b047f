#pragma once

// Canonical and microcanonical ensembles, inverse-temperature inversion, and
// the quench sampler that replaces thermal sampling during training.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/noise.hpp"
#include "ethqbm/operators.hpp"
#include "ethqbm/spectral.hpp"
#include "ethqbm/spin_ops.hpp"

namespace ethqbm {

struct GibbsEnsemble {
  Eigen::VectorXd probabilities;  // p_k = e^{-beta E_k} / Z
  double beta = 0.0;
  double log_partition = 0.0;
};

/// Weights e^{-beta E}/Z via log-sum-exp; safe for any finite beta.
inline GibbsEnsemble gibbs_weights(const Eigen::VectorXd& energies, double beta) {
  require(std::isfinite(beta), "gibbs_weights: beta must be finite");
  GibbsEnsemble g;
  g.beta = beta;
  const Eigen::VectorXd exponent = -beta * energies;
  const double shift = exponent.maxCoeff();
  g.probabilities = (exponent.array() - shift).exp().matrix();
  const double sum = g.probabilities.sum();
  g.probabilities /= sum;
  g.log_partition = shift + std::log(sum);
  return g;
}

inline GibbsEnsemble gibbs_ensemble(const EigenSystem& eig, double beta) { return gibbs_weights(eig.values, beta); }

/// <E_k|O|E_k> for every eigenvector.
inline Eigen::VectorXd eigenstate_expectations(const PauliSum& op, const EigenSystem& eig) {
  require(op.qubits() == eig.qubits, "eigenstate_expectations: dimension mismatch");
  if (op.is_diagonal()) {
    const Eigen::VectorXd d = op.diagonal();
    return (eig.vectors.cwiseAbs2().transpose() * d).eval();
  }
  Eigen::VectorXd out(eig.dim());
  for (Eigen::Index k = 0; k < eig.dim(); ++k) out(k) = op.expectation(Eigen::VectorXcd(eig.vectors.col(k)));
  return out;
}

inline Eigen::VectorXd eigenstate_expectations(const DenseOperator& op, const EigenSystem& eig) {
  require(op.dim() == eig.dim(), "eigenstate_expectations: dimension mismatch");
  return (eig.vectors.adjoint() * op.matrix() * eig.vectors).diagonal().real();
}

inline double gibbs_expectation(const PauliSum& op, const EigenSystem& eig, double beta) {
  return gibbs_ensemble(eig, beta).probabilities.dot(eigenstate_expectations(op, eig));
}

/// tr(O e^{-beta H}) / tr(e^{-beta H}).
inline double gibbs_expectation(const DenseOperator& op, const EigenSystem& eig, double beta) {
  require(op.is_hermitian(), "gibbs_expectation: observable is not Hermitian");
  return gibbs_ensemble(eig, beta).probabilities.dot(eigenstate_expectations(op, eig));
}

inline double thermal_energy(const EigenSystem& eig, double beta) {
  return gibbs_ensemble(eig, beta).probabilities.dot(eig.values);
}

/// Diagonal of the Gibbs density matrix in the computational basis.
inline Eigen::VectorXd gibbs_populations(const EigenSystem& eig, double beta) {
  return eig.vectors.cwiseAbs2() * gibbs_ensemble(eig, beta).probabilities;
}

/// Mean of <E_k|O|E_k> over eigenstates with |E_k - energy| <= window/2.
template <class Observable>
double microcanonical_expectation(const Observable& op, const EigenSystem& eig, double energy, double window) {
  require(window >= 0.0, "microcanonical_expectation: negative window");
  const Eigen::VectorXd diag = eigenstate_expectations(op, eig);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k < eig.dim(); ++k) {
    if (std::abs(eig.values(k) - energy) <= 0.5 * window) {
      sum += diag(k);
      ++count;
    }
  }
  if (count == 0) throw NumericalError("microcanonical_expectation: no eigenstate inside the energy window");
  return sum / count;
}

/// spectral range / sqrt(n).
inline double default_microcanonical_window(const EigenSystem& eig) {
  return eig.spectral_range() / std::sqrt(static_cast<double>(std::max(1, eig.qubits)));
}

/// beta with <H>_beta = target, by bisection on the decreasing map beta -> <H>_beta.
/// The target must lie strictly inside (E_min, E_max).
inline double invert_beta(const EigenSystem& eig, double target) {
  const double e_min = eig.values(0);
  const double e_max = eig.values(eig.dim() - 1);
  const double range = e_max - e_min;
  if (!(target > e_min && target < e_max) || range <= 0.0) {
    throw NumericalError("invert_beta: target energy outside the open spectral interval");
  }
  const double e_mid = eig.values.mean();
  if (target == e_mid) return 0.0;

  double lo = -1.0, hi = 1.0;  // energy(lo) >= energy(hi)
  for (int k = 0; k < 2000 && thermal_energy(eig, hi) > target; ++k) {
    lo = hi;
    hi *= 2.0;
  }
  for (int k = 0; k < 2000 && thermal_energy(eig, lo) < target; ++k) {
    hi = lo;
    lo *= 2.0;
  }
  for (int k = 0; k < 400; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double e = thermal_energy(eig, mid);
    if (e > target) {
      lo = mid;
    } else if (e < target) {
      hi = mid;
    } else {
      return mid;
    }
  }
  const double beta = 0.5 * (lo + hi);
  if (std::abs(thermal_energy(eig, beta) - target) > 1e-9 * range) {
    throw NumericalError("invert_beta: bisection did not converge");
  }
  return beta;
}

struct BetaEstimate {
  double beta = 0.0;
  bool clamped = false;  // target was moved inside the spectrum before inversion
};

/// invert_beta, but targets outside the spectrum (shot noise, a thermometer
/// pinned at an extremal state) are pulled 1e-6 * range inside first.
inline BetaEstimate invert_beta_clamped(const EigenSystem& eig, double target) {
  const double e_min = eig.values(0);
  const double e_max = eig.values(eig.dim() - 1);
  const double margin = 1e-6 * (e_max - e_min);
  BetaEstimate out;
  double t = target;
  if (t <= e_min + margin) {
    t = e_min + margin;
    out.clamped = true;
  } else if (t >= e_max - margin) {
    t = e_max - margin;
    out.clamped = true;
  }
  out.beta = invert_beta(eig, t);
  return out;
}

struct EnergyVarianceDiagnostic {
  double relative_variance = 0.0;  // (<H^2> - <H>^2) / <H>^2
  bool flagged = false;            // relative variance above 0.5, or <H> == 0
};

inline EnergyVarianceDiagnostic energy_variance_diagnostic(const PauliSum& h, const Eigen::VectorXcd& state) {
  require(std::abs(state.norm() - 1.0) <= 1e-10, "energy_variance_diagnostic: state is not normalized");
  const Eigen::VectorXcd h_psi = h.apply(state);
  const double mean = state.dot(h_psi).real();  // Eigen's dot conjugates the left operand
  const double second = h_psi.squaredNorm();
  EnergyVarianceDiagnostic out;
  if (mean == 0.0) {
    out.relative_variance = std::numeric_limits<double>::infinity();
    out.flagged = true;
    return out;
  }
  out.relative_variance = (second - mean * mean) / (mean * mean);
  out.flagged = out.relative_variance > 0.5;
  return out;
}

inline EnergyVarianceDiagnostic energy_variance_diagnostic(const DenseOperator& h, const Eigen::VectorXcd& state) {
  require(h.dim() == state.size(), "energy_variance_diagnostic: dimension mismatch");
  require(std::abs(state.norm() - 1.0) <= 1e-10, "energy_variance_diagnostic: state is not normalized");
  const Eigen::VectorXcd h_psi = h.matrix() * state;
  const double mean = state.dot(h_psi).real();
  const double second = h_psi.squaredNorm();
  EnergyVarianceDiagnostic out;
  if (mean == 0.0) {
    out.relative_variance = std::numeric_limits<double>::infinity();
    out.flagged = true;
    return out;
  }
  out.relative_variance = (second - mean * mean) / (mean * mean);
  out.flagged = out.relative_variance > 0.5;
  return out;
}

/// Closed form for |+>^n and a Hamiltonian of pure-X and pure-Z strings:
/// <H> is the sum of X-string coefficients, the variance the sum over distinct
/// Z-strings of squared coefficients (sum b_i^2 + sum w_ij^2 for Ising models).
inline EnergyVarianceDiagnostic plus_state_energy_variance(const PauliSum& h) {
  double mean = 0.0;
  std::vector<std::pair<std::uint32_t, double>> z_strings;
  for (const auto& t : h.terms()) {
    require(t.x_mask == 0 || t.z_mask == 0, "plus_state_energy_variance: mixed X/Z string");
    if (t.z_mask == 0) {
      mean += t.coeff;
      continue;
    }
    auto it = std::find_if(z_strings.begin(), z_strings.end(), [&](const auto& p) { return p.first == t.z_mask; });
    if (it == z_strings.end()) {
      z_strings.emplace_back(t.z_mask, t.coeff);
    } else {
      it->second += t.coeff;
    }
  }
  double variance = 0.0;
  for (const auto& [mask, c] : z_strings) variance += c * c;
  EnergyVarianceDiagnostic out;
  if (mean == 0.0) {
    out.relative_variance = std::numeric_limits<double>::infinity();
    out.flagged = true;
    return out;
  }
  out.relative_variance = variance / (mean * mean);
  out.flagged = out.relative_variance > 0.5;
  return out;
}

/// Infinite-time average sum_k |c_k|^2 <E_k|O|E_k> for initial state psi0.
inline double long_time_average(const PauliSum& op, const EigenSystem& eig, const Eigen::VectorXcd& psi0) {
  const Eigen::VectorXd weights = eigenbasis_coefficients(eig, psi0).cwiseAbs2();
  return weights.dot(eigenstate_expectations(op, eig));
}

struct NamedObservable {
  std::string name;
  PauliSum op;
};

/// The thermometer block on its own register, with its spectrum, used to turn a
/// measured thermometer energy into an inverse temperature.
struct ThermometerProbe {
  PauliSum embedded;  // H_therm on the full register
  EigenSystem spectrum;
};

inline ThermometerProbe make_thermometer_probe(const SystemLayout& layout, const HamiltonianTerms& terms) {
  require(layout.n_thermometer() >= 1, "make_thermometer_probe: layout has no thermometer");
  const auto sites = layout.thermometer_sites();
  const PauliSum local = restrict_to_sites(terms.thermometer, sites);
  return {terms.thermometer, eig_hermitian(local.to_dense())};
}

struct QuenchEstimate {
  std::vector<double> times;
  std::vector<std::pair<std::string, double>> observables;  // time averages
  double thermometer_energy = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> beta_therm;
  bool beta_therm_clamped = false;
  std::optional<double> beta_full;
  double initial_energy = 0.0;
  double energy_rel_variance = 0.0;
  bool energy_variance_flagged = false;
  double max_fluctuation = 0.0;  // max_{O,t} |<O>(t) - time average|

  double value(std::string_view name) const {
    for (const auto& [n, v] : observables) {
      if (n == name) return v;
    }
    throw InvalidArgument("QuenchEstimate: unknown observable " + std::string(name));
  }
};

struct QuenchInputs {
  const EigenSystem* total = nullptr;  // spectrum of H_QBM + H_therm + H_int
  const PauliSum* hamiltonian = nullptr;
  const ThermometerProbe* thermometer = nullptr;  // optional
  const NoiseConfig* noise = nullptr;             // optional
};

namespace detail {

struct Moments {
  double mean = 0.0;
  double second = 0.0;
};

inline Moments moments(const PauliSum& op, const Eigen::VectorXcd& psi) {
  const Eigen::VectorXcd o_psi = op.apply(psi);
  return {psi.dot(o_psi).real(), o_psi.squaredNorm()};
}

inline Moments moments(const PauliSum& op, const DensityState& rho) {
  return {op.expectation(rho.matrix()), (op * op).expectation(rho.matrix())};
}

}  // namespace detail

/// Evolve |+>^n to each time (through the noise channels when enabled), average
/// each observable uniformly over the times, and read the thermometer.
/// Shot noise, when enabled, perturbs every per-time estimate. `rng` is needed
/// only when noise is enabled.
inline QuenchEstimate quench_sample(const QuenchInputs& in, std::span<const NamedObservable> observables,
                                    std::span<const double> times, Rng* rng = nullptr) {
  require(in.total != nullptr && in.hamiltonian != nullptr, "quench_sample: missing Hamiltonian");
  require(!times.empty(), "quench_sample: need at least one time");
  for (double t : times) require(t > 0.0 && std::isfinite(t), "quench_sample: times must be positive");
  const EigenSystem& eig = *in.total;
  const bool channels = in.noise != nullptr && in.noise->channels_enabled();
  const bool shots = in.noise != nullptr && in.noise->shot_noise;
  if (in.noise) in.noise->validate();
  require(!(channels || shots) || rng != nullptr, "quench_sample: noise needs an rng");

  QuenchEstimate est;
  est.times.assign(times.begin(), times.end());
  const Eigen::VectorXcd psi0 = plus_state(eig.qubits);
  const Eigen::VectorXcd coeffs = eigenbasis_coefficients(eig, psi0);

  const auto variance = energy_variance_diagnostic(*in.hamiltonian, psi0);
  est.initial_energy = in.hamiltonian->expectation(psi0);
  est.energy_rel_variance = variance.relative_variance;
  est.energy_variance_flagged = variance.flagged;
  try {
    est.beta_full = invert_beta(eig, est.initial_energy);
  } catch (const NumericalError&) {
    est.beta_full.reset();
  }

  const std::size_t n_obs = observables.size() + (in.thermometer ? 1 : 0);
  std::vector<std::vector<double>> samples(n_obs, std::vector<double>(times.size()));
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    auto measure = [&](const auto& state) {
      for (std::size_t k = 0; k < n_obs; ++k) {
        const PauliSum& op = k < observables.size() ? observables[k].op : in.thermometer->embedded;
        const auto m = detail::moments(op, state);
        samples[k][ti] = shots ? shot_noise(m.mean, m.second, in.noise->shots, *rng) : m.mean;
      }
    };
    if (channels) {
      measure(noisy_quench_state(eig, times[ti], *in.noise, *rng));
    } else {
      measure(evolve_coefficients(eig, coeffs, times[ti]));
    }
  }

  std::vector<double> averages(n_obs);
  for (std::size_t k = 0; k < n_obs; ++k) {
    double sum = 0.0;
    for (double v : samples[k]) sum += v;
    averages[k] = sum / static_cast<double>(times.size());
    for (double v : samples[k]) est.max_fluctuation = std::max(est.max_fluctuation, std::abs(v - averages[k]));
  }
  for (std::size_t k = 0; k < observables.size(); ++k) est.observables.emplace_back(observables[k].name, averages[k]);

  if (in.thermometer) {
    est.thermometer_energy = averages.back();
    try {
      const auto b = invert_beta_clamped(in.thermometer->spectrum, est.thermometer_energy);
      est.beta_therm = b.beta;
      est.beta_therm_clamped = b.clamped;
    } catch (const NumericalError&) {
      est.beta_therm.reset();
    }
  }
  return est;
}

/// Draw `count` quench times uniformly from the standard interval.
inline std::vector<double> draw_quench_times(Rng& rng, int count) {
  require(count >= 1, "draw_quench_times: need at least one time");
  std::vector<double> times(static_cast<std::size_t>(count));
  for (auto& t : times) t = uniform_quench_time(rng);
  return times;
}

}  // namespace ethqbm
