#pragma once

// Dense operators and real-coefficient Pauli sums over n qubits.
//
// Basis convention: site s of an n-qubit register is bit (n-1-s) of the
// computational basis index, so site 0 is the leftmost Kronecker factor.
// A cleared bit is sigma^z = +1, a set bit is sigma^z = -1.

#include <Eigen/Dense>

#include <bit>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ethqbm/common.hpp"

namespace ethqbm {

using Complex = std::complex<double>;

inline std::uint32_t site_bit(int n_qubits, int site) {
  return std::uint32_t{1} << (n_qubits - 1 - site);
}

/// sigma^z eigenvalue of `site` in basis state `index`.
inline int spin_of(std::uint32_t index, int n_qubits, int site) {
  return (index & site_bit(n_qubits, site)) ? -1 : 1;
}

inline int parity_sign(std::uint32_t bits) { return (std::popcount(bits) & 1) ? -1 : 1; }

class DenseOperator {
 public:
  DenseOperator() = default;

  DenseOperator(int n_qubits, Eigen::MatrixXcd matrix) : n_qubits_(n_qubits), matrix_(std::move(matrix)) {
    require(n_qubits >= 0 && n_qubits <= kMaxQubits, "DenseOperator: qubit count outside [0, 14]");
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    require(matrix_.rows() == dim && matrix_.cols() == dim, "DenseOperator: matrix is not 2^n x 2^n");
    hermitian_ = hermiticity_error() < 1e-12;
  }

  static DenseOperator zero(int n_qubits) {
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    return {n_qubits, Eigen::MatrixXcd::Zero(dim, dim)};
  }
  static DenseOperator identity(int n_qubits) {
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    return {n_qubits, Eigen::MatrixXcd::Identity(dim, dim)};
  }

  int qubits() const { return n_qubits_; }
  Eigen::Index dim() const { return matrix_.rows(); }
  const Eigen::MatrixXcd& matrix() const { return matrix_; }
  bool is_hermitian() const { return hermitian_; }
  bool is_real() const { return matrix_.imag().cwiseAbs().maxCoeff() == 0.0; }

  /// max |A - A^dagger| over entries.
  double hermiticity_error() const {
    if (matrix_.size() == 0) return 0.0;
    return (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
  }

  DenseOperator operator+(const DenseOperator& other) const {
    require(other.n_qubits_ == n_qubits_, "DenseOperator: qubit count mismatch");
    return {n_qubits_, matrix_ + other.matrix_};
  }
  DenseOperator operator-(const DenseOperator& other) const {
    require(other.n_qubits_ == n_qubits_, "DenseOperator: qubit count mismatch");
    return {n_qubits_, matrix_ - other.matrix_};
  }
  DenseOperator operator*(const DenseOperator& other) const {
    require(other.n_qubits_ == n_qubits_, "DenseOperator: qubit count mismatch");
    return {n_qubits_, matrix_ * other.matrix_};
  }
  DenseOperator operator*(double s) const { return {n_qubits_, matrix_ * s}; }

 private:
  int n_qubits_ = 0;
  Eigen::MatrixXcd matrix_ = Eigen::MatrixXcd::Zero(1, 1);
  bool hermitian_ = true;
};

enum class PauliAxis { x, y, z };

/// I^(site) (x) sigma_axis (x) I^(n-site-1).
inline DenseOperator build_pauli(int site, PauliAxis axis, int n_qubits) {
  require(n_qubits >= 1 && n_qubits <= kMaxQubits, "build_pauli: qubit count outside [1, 14]");
  require(site >= 0 && site < n_qubits, "build_pauli: site out of range");
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  const std::uint32_t bit = site_bit(n_qubits, site);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    const bool up = (i & bit) == 0;
    switch (axis) {
      case PauliAxis::z: m(i, i) = up ? 1.0 : -1.0; break;
      case PauliAxis::x: m(i ^ bit, i) = 1.0; break;
      // sigma^y |0> = i|1>, sigma^y |1> = -i|0>
      case PauliAxis::y: m(i ^ bit, i) = up ? Complex(0, 1) : Complex(0, -1); break;
    }
  }
  return {n_qubits, std::move(m)};
}

/// One Pauli string X^x_mask Z^z_mask (Z applied first) with a real coefficient.
/// <i ^ x_mask| X^x Z^z |i> = (-1)^popcount(i & z_mask).
struct PauliTerm {
  double coeff = 0.0;
  std::uint32_t x_mask = 0;
  std::uint32_t z_mask = 0;
};

/// Sparse real combination of X/Z Pauli strings. Hamiltonians, gradient
/// observables and clamped operators all live here; DenseOperator is only
/// materialized for diagonalization.
class PauliSum {
 public:
  PauliSum() = default;
  explicit PauliSum(int n_qubits) : n_qubits_(n_qubits) {
    require(n_qubits >= 0 && n_qubits <= kMaxQubits, "PauliSum: qubit count outside [0, 14]");
  }

  int qubits() const { return n_qubits_; }
  std::span<const PauliTerm> terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  PauliSum& add(double coeff, std::uint32_t x_mask, std::uint32_t z_mask) {
    if (coeff == 0.0) return *this;
    for (auto& t : terms_) {
      if (t.x_mask == x_mask && t.z_mask == z_mask) {
        t.coeff += coeff;
        return *this;
      }
    }
    terms_.push_back({coeff, x_mask, z_mask});
    return *this;
  }
  PauliSum& add_identity(double coeff) { return add(coeff, 0, 0); }
  PauliSum& add_x(double coeff, int site) { return add(coeff, site_bit(n_qubits_, site), 0); }
  PauliSum& add_z(double coeff, int site) { return add(coeff, 0, site_bit(n_qubits_, site)); }
  PauliSum& add_zz(double coeff, int a, int b) {
    return add(coeff, 0, site_bit(n_qubits_, a) | site_bit(n_qubits_, b));
  }
  PauliSum& add_xx(double coeff, int a, int b) {
    return add(coeff, site_bit(n_qubits_, a) | site_bit(n_qubits_, b), 0);
  }

  PauliSum& operator+=(const PauliSum& other) {
    require(other.n_qubits_ == n_qubits_, "PauliSum: qubit count mismatch");
    for (const auto& t : other.terms_) add(t.coeff, t.x_mask, t.z_mask);
    return *this;
  }
  friend PauliSum operator+(PauliSum a, const PauliSum& b) { return a += b; }

  PauliSum operator*(double s) const {
    PauliSum out(n_qubits_);
    for (const auto& t : terms_) out.add(t.coeff * s, t.x_mask, t.z_mask);
    return out;
  }

  /// (X^a Z^b)(X^c Z^d) = (-1)^|b&c| X^(a^c) Z^(b^d).
  PauliSum operator*(const PauliSum& other) const {
    require(other.n_qubits_ == n_qubits_, "PauliSum: qubit count mismatch");
    PauliSum out(n_qubits_);
    for (const auto& l : terms_) {
      for (const auto& r : other.terms_) {
        out.add(l.coeff * r.coeff * parity_sign(l.z_mask & r.x_mask), l.x_mask ^ r.x_mask, l.z_mask ^ r.z_mask);
      }
    }
    return out;
  }

  bool is_diagonal() const {
    for (const auto& t : terms_) {
      if (t.x_mask != 0) return false;
    }
    return true;
  }

  /// Diagonal in the computational basis; only meaningful when is_diagonal().
  Eigen::VectorXd diagonal() const {
    const std::size_t dim = std::size_t{1} << n_qubits_;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (const auto& t : terms_) {
      if (t.x_mask != 0) continue;
      for (std::uint32_t i = 0; i < dim; ++i) d(i) += t.coeff * parity_sign(i & t.z_mask);
    }
    return d;
  }

  DenseOperator to_dense() const {
    const std::size_t dim = std::size_t{1} << n_qubits_;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (const auto& t : terms_) {
      for (std::uint32_t i = 0; i < dim; ++i) m(i ^ t.x_mask, i) += t.coeff * parity_sign(i & t.z_mask);
    }
    return {n_qubits_, std::move(m)};
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& psi) const {
    check_dim(psi.size());
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(psi.size());
    for (const auto& t : terms_) {
      for (std::uint32_t i = 0; i < psi.size(); ++i) out(i ^ t.x_mask) += t.coeff * parity_sign(i & t.z_mask) * psi(i);
    }
    return out;
  }

  /// Re <psi|O|psi>.
  double expectation(const Eigen::VectorXcd& psi) const {
    check_dim(psi.size());
    double total = 0.0;
    for (const auto& t : terms_) {
      Complex acc = 0.0;
      for (std::uint32_t i = 0; i < psi.size(); ++i) {
        acc += std::conj(psi(i ^ t.x_mask)) * psi(i) * static_cast<double>(parity_sign(i & t.z_mask));
      }
      total += t.coeff * acc.real();
    }
    return total;
  }

  /// Re tr(rho O).
  double expectation(const Eigen::MatrixXcd& rho) const {
    check_dim(rho.rows());
    double total = 0.0;
    for (const auto& t : terms_) {
      Complex acc = 0.0;
      // tr(P rho) = sum_i P[i^x, i] rho[i, i^x]
      for (std::uint32_t i = 0; i < rho.rows(); ++i) {
        acc += rho(i, i ^ t.x_mask) * static_cast<double>(parity_sign(i & t.z_mask));
      }
      total += t.coeff * acc.real();
    }
    return total;
  }

  /// Operator norm bound: sum of |coefficients|.
  double coefficient_norm() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.coeff);
    return s;
  }

  /// Human-readable label such as "Z0Z6" or "X0X6+Z0Z6" (coefficients dropped).
  std::string label() const {
    std::string out;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      if (k) out += "+";
      const auto& t = terms_[k];
      if (t.x_mask == 0 && t.z_mask == 0) out += "I";
      for (int s = 0; s < n_qubits_; ++s) {
        if (t.x_mask & site_bit(n_qubits_, s)) out += "X" + std::to_string(s);
      }
      for (int s = 0; s < n_qubits_; ++s) {
        if (t.z_mask & site_bit(n_qubits_, s)) out += "Z" + std::to_string(s);
      }
    }
    return out;
  }

 private:
  void check_dim(Eigen::Index size) const {
    require(size == (Eigen::Index{1} << n_qubits_), "PauliSum: state dimension mismatch");
  }

  int n_qubits_ = 0;
  std::vector<PauliTerm> terms_;
};

/// Re-index a Pauli sum onto a sub-register. `sites[k]` becomes site k of
/// the result. Every term must be supported inside `sites`.
inline PauliSum restrict_to_sites(const PauliSum& op, std::span<const int> sites) {
  const int n = op.qubits();
  const int m = static_cast<int>(sites.size());
  std::uint32_t support = 0;
  for (int s : sites) {
    require(s >= 0 && s < n, "restrict_to_sites: site out of range");
    support |= site_bit(n, s);
  }
  PauliSum out(m);
  for (const auto& t : op.terms()) {
    require(((t.x_mask | t.z_mask) & ~support) == 0, "restrict_to_sites: term acts outside the kept sites");
    std::uint32_t x = 0, z = 0;
    for (int k = 0; k < m; ++k) {
      const std::uint32_t from = site_bit(n, sites[k]);
      if (t.x_mask & from) x |= site_bit(m, k);
      if (t.z_mask & from) z |= site_bit(m, k);
    }
    out.add(t.coeff, x, z);
  }
  return out;
}

}  // namespace ethqbm
