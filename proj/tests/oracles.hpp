#pragma once

// Independent reference implementations used by the tests: Kronecker-product
// Pauli assembly and a dense matrix exponential. Nothing here calls the
// library's own operator code.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <complex>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXcd;
using C = std::complex<double>;

inline Mat pauli(char axis) {
  Mat m(2, 2);
  switch (axis) {
    case 'x': m << 0, 1, 1, 0; break;
    case 'y': m << 0, C(0, -1), C(0, 1), 0; break;
    case 'z': m << 1, 0, 0, -1; break;
    default: m = Mat::Identity(2, 2);
  }
  return m;
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

/// I x .. x sigma_axis (at `site`, leftmost factor = site 0) x .. x I.
inline Mat site_op(int site, char axis, int n) {
  Mat out = Mat::Identity(1, 1);
  for (int s = 0; s < n; ++s) out = kron(out, s == site ? pauli(axis) : pauli('i'));
  return out;
}

inline Mat expm(const Mat& a) { return a.exp(); }

/// Random Hermitian matrix with N(0,1) real and imaginary parts, scaled by 1/sqrt(dim).
inline Mat random_hermitian(int dim, std::mt19937_64& rng, bool real = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat a(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) a(i, j) = C(n(rng), real ? 0.0 : n(rng));
  }
  return (a + a.adjoint()) / (2.0 * std::sqrt(static_cast<double>(dim)));
}

/// Projector onto basis states whose first `nv` sites read z (z=+1 is a cleared bit).
inline Mat visible_projector(const std::vector<int>& z, int n) {
  Mat p = Mat::Identity(1, 1);
  for (int s = 0; s < n; ++s) {
    Mat f = Mat::Zero(2, 2);
    if (s < static_cast<int>(z.size())) {
      f(z[s] == 1 ? 0 : 1, z[s] == 1 ? 0 : 1) = 1.0;
    } else {
      f = Mat::Identity(2, 2);
    }
    p = kron(p, f);
  }
  return p;
}

}  // namespace oracle
