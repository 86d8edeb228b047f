#pragma once

// Single-qubit Kraus channels applied after quench evolution, and Gaussian
// emulation of finite-shot observable estimates.

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "ethqbm/common.hpp"
#include "ethqbm/operators.hpp"
#include "ethqbm/spectral.hpp"

namespace ethqbm {

struct NoiseConfig {
  double t1 = 75.0;     // relaxation time, units of 1/mean transverse field
  double t_phi = 75.0;  // dephasing time
  int shots = 1000;     // nu, samples per observable
  bool amplitude_damping = false;
  bool dephasing = false;
  bool shot_noise = false;

  bool channels_enabled() const { return amplitude_damping || dephasing; }

  void validate() const {
    require(t1 > 0.0 && t_phi > 0.0, "NoiseConfig: coherence times must be positive");
    require(shots >= 1, "NoiseConfig: shot count must be at least 1");
  }
};

class DensityState {
 public:
  DensityState() = default;
  DensityState(int n_qubits, Eigen::MatrixXcd rho) : n_qubits_(n_qubits), rho_(std::move(rho)) {
    require(rho_.rows() == (Eigen::Index{1} << n_qubits) && rho_.cols() == rho_.rows(),
            "DensityState: matrix is not 2^n x 2^n");
  }

  static DensityState from_pure(const Eigen::VectorXcd& psi) {
    const int n = static_cast<int>(std::lround(std::log2(static_cast<double>(psi.size()))));
    return {n, psi * psi.adjoint()};
  }

  int qubits() const { return n_qubits_; }
  const Eigen::MatrixXcd& matrix() const { return rho_; }
  Eigen::MatrixXcd& matrix() { return rho_; }
  double trace() const { return rho_.trace().real(); }
  double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho_ + rho_.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

  /// Probabilities of computational basis outcomes.
  Eigen::VectorXd populations() const { return rho_.diagonal().real(); }

 private:
  int n_qubits_ = 0;
  Eigen::MatrixXcd rho_;
};

using KrausPair = std::array<Eigen::Matrix2cd, 2>;

/// E1 = diag(1, e^{-t/2T1}), E2 = [[0, sqrt(1 - e^{-t/T1})], [0, 0]].
inline KrausPair amplitude_damping_kraus(double t, double t1) {
  require(t >= 0.0 && t1 > 0.0, "amplitude damping: need t >= 0 and T1 > 0");
  KrausPair k;
  k[0] << 1.0, 0.0, 0.0, std::exp(-t / (2.0 * t1));
  k[1] << 0.0, std::sqrt(-std::expm1(-t / t1)), 0.0, 0.0;
  return k;
}

/// E1 = diag(1, e^{-t/T_phi}), E2 = diag(0, sqrt(1 - e^{-2t/T_phi})).
inline KrausPair dephasing_kraus(double t, double t_phi) {
  require(t >= 0.0 && t_phi > 0.0, "dephasing: need t >= 0 and T_phi > 0");
  KrausPair k;
  k[0] << 1.0, 0.0, 0.0, std::exp(-t / t_phi);
  k[1] << 0.0, 0.0, 0.0, std::sqrt(-std::expm1(-2.0 * t / t_phi));
  return k;
}

/// rho -> sum_k E_k rho E_k^dagger with E_k acting on `site`.
inline DensityState apply_kraus(const DensityState& state, const KrausPair& kraus, int site) {
  const int n = state.qubits();
  require(site >= 0 && site < n, "apply_kraus: site out of range");
  const std::uint32_t bit = site_bit(n, site);
  const Eigen::Index dim = state.matrix().rows();
  const Eigen::MatrixXcd& rho = state.matrix();
  // Every 2x2 block {i, i|bit} x {c, c|bit} maps independently through the
  // superoperator S[(a,b),(p,q)] = sum_k E_k(a,p) conj(E_k(b,q)).
  Complex sup[4][4] = {};
  for (const auto& e : kraus) {
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int p = 0; p < 2; ++p)
          for (int q = 0; q < 2; ++q) sup[2 * a + b][2 * p + q] += e(a, p) * std::conj(e(b, q));
  }
  Eigen::MatrixXcd out(dim, dim);
  for (std::uint32_t c0 = 0; c0 < dim; ++c0) {
    if (c0 & bit) continue;
    const std::uint32_t c1 = c0 | bit;
    const Complex* r0 = rho.col(c0).data();
    const Complex* r1 = rho.col(c1).data();
    Complex* o0 = out.col(c0).data();
    Complex* o1 = out.col(c1).data();
    for (std::uint32_t i0 = 0; i0 < dim; ++i0) {
      if (i0 & bit) continue;
      const std::uint32_t i1 = i0 | bit;
      const Complex in[4] = {r0[i0], r1[i0], r0[i1], r1[i1]};
      Complex res[4];
      for (int k = 0; k < 4; ++k) res[k] = sup[k][0] * in[0] + sup[k][1] * in[1] + sup[k][2] * in[2] + sup[k][3] * in[3];
      o0[i0] = res[0];
      o1[i0] = res[1];
      o0[i1] = res[2];
      o1[i1] = res[3];
    }
  }
  return {n, std::move(out)};
}

inline DensityState apply_amplitude_damping(const DensityState& state, double t, double t1, int site) {
  return apply_kraus(state, amplitude_damping_kraus(t, t1), site);
}

inline DensityState apply_dephasing(const DensityState& state, double t, double t_phi, int site) {
  return apply_kraus(state, dephasing_kraus(t, t_phi), site);
}

/// Evolve |+>^n for `t_evolve`, then apply the enabled channels to every qubit,
/// each application with its own duration drawn from the quench-time interval.
inline DensityState noisy_quench_state(const EigenSystem& eig, double t_evolve, const NoiseConfig& config, Rng& rng) {
  config.validate();
  DensityState rho = DensityState::from_pure(evolve(plus_state(eig.qubits), eig, t_evolve));
  for (int site = 0; site < eig.qubits; ++site) {
    if (config.amplitude_damping) rho = apply_amplitude_damping(rho, uniform_quench_time(rng), config.t1, site);
    if (config.dephasing) rho = apply_dephasing(rho, uniform_quench_time(rng), config.t_phi, site);
  }
  return rho;
}

/// mean + N(0, (second - mean^2) / shots); a slightly negative variance from
/// rounding is clipped to zero.
inline double shot_noise(double exact_mean, double exact_second_moment, int shots, Rng& rng) {
  require(shots >= 1, "shot_noise: shot count must be at least 1");
  const double variance = std::max(0.0, exact_second_moment - exact_mean * exact_mean) / shots;
  if (variance == 0.0) return exact_mean;
  return normal_with_variance(rng, exact_mean, variance);
}

}  // namespace ethqbm
