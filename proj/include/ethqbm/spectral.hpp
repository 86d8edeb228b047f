#pragma once

// Hermitian eigendecomposition, unitary evolution and nearest-neighbour
// level-spacing statistics with Berry-Robnik fits.

#include <complex>
#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/operators.hpp"

namespace ethqbm {

struct EigenSystem {
  Eigen::VectorXd values;    // ascending
  Eigen::MatrixXcd vectors;  // columns are eigenvectors
  int qubits = 0;

  Eigen::Index dim() const { return values.size(); }
  double spectral_range() const { return values(values.size() - 1) - values(0); }
};

inline EigenSystem eig_hermitian(const DenseOperator& h) {
  require(h.is_hermitian(), "eig_hermitian: operator is not Hermitian");
  const auto n = static_cast<lapack_int>(h.dim());
  EigenSystem out;
  out.qubits = h.qubits();
  out.values.resize(n);
  if (h.is_real()) {
    Eigen::MatrixXd a = h.matrix().real();
    const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, out.values.data());
    if (info != 0) throw NumericalError("eig_hermitian: dsyevd failed with info " + std::to_string(info));
    out.vectors = a.cast<Complex>();
  } else {
    Eigen::MatrixXcd a = h.matrix();
    const lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, out.values.data());
    if (info != 0) throw NumericalError("eig_hermitian: zheevd failed with info " + std::to_string(info));
    out.vectors = std::move(a);
  }
  return out;
}

/// Coefficients of `state` in the eigenbasis, V^dagger state.
inline Eigen::VectorXcd eigenbasis_coefficients(const EigenSystem& eig, const Eigen::VectorXcd& state) {
  require(state.size() == eig.dim(), "evolve: state dimension does not match the Hamiltonian");
  return eig.vectors.adjoint() * state;
}

/// V e^{-iEt} c for eigenbasis coefficients c.
inline Eigen::VectorXcd evolve_coefficients(const EigenSystem& eig, const Eigen::VectorXcd& coefficients, double t) {
  Eigen::VectorXcd phased(coefficients.size());
  for (Eigen::Index k = 0; k < coefficients.size(); ++k) {
    phased(k) = coefficients(k) * std::polar(1.0, -eig.values(k) * t);
  }
  return eig.vectors * phased;
}

/// e^{-iHt} state.
inline Eigen::VectorXcd evolve(const Eigen::VectorXcd& state, const EigenSystem& eig, double t) {
  require(state.size() == eig.dim(), "evolve: state dimension does not match the Hamiltonian");
  require(std::abs(state.norm() - 1.0) <= 1e-10, "evolve: state is not normalized");
  return evolve_coefficients(eig, eigenbasis_coefficients(eig, state), t);
}

/// |+>^n.
inline Eigen::VectorXcd plus_state(int n_qubits) {
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  return Eigen::VectorXcd::Constant(dim, Complex(1.0 / std::sqrt(static_cast<double>(dim)), 0.0));
}

struct SpacingSample {
  std::vector<double> spacings;  // median-normalized
  double normalization = 1.0;    // median raw spacing
  bool below_recommended_size = false;
};

/// Consecutive differences of the sorted spectrum divided by their median.
/// Exact degeneracies are kept as zero spacings.
inline SpacingSample level_spacings(std::span<const double> eigenvalues) {
  require(eigenvalues.size() >= 2, "level_spacings: need at least two eigenvalues");
  std::vector<double> sorted(eigenvalues.begin(), eigenvalues.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> raw(sorted.size() - 1);
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k) raw[k] = sorted[k + 1] - sorted[k];

  std::vector<double> tmp = raw;
  const std::size_t mid = tmp.size() / 2;
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid), tmp.end());
  double median = tmp[mid];
  if (tmp.size() % 2 == 0) {
    const double lower = *std::max_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) throw NumericalError("level_spacings: median spacing is zero (degenerate spectrum)");

  SpacingSample out;
  out.normalization = median;
  out.below_recommended_size = eigenvalues.size() < 50;
  out.spacings.reserve(raw.size());
  for (double s : raw) out.spacings.push_back(s / median);
  return out;
}

inline SpacingSample level_spacings(const EigenSystem& eig) {
  return level_spacings(std::span<const double>(eig.values.data(), static_cast<std::size_t>(eig.values.size())));
}

/// Berry-Robnik surmise with regular fraction rho (unit mean spacing):
/// rho = 1 is Poisson, rho = 0 the Wigner surmise.
inline double berry_robnik_pdf(double s, double rho) {
  require(s >= 0.0, "berry_robnik_pdf: negative spacing");
  require(rho >= 0.0 && rho <= 1.0, "berry_robnik_pdf: rho outside [0, 1]");
  constexpr double pi = std::numbers::pi;
  const double q = 1.0 - rho;
  const double regular = rho * rho * std::erfc(0.5 * std::sqrt(pi) * q * s);
  const double chaotic = (2.0 * rho * q + 0.5 * pi * q * q * q * s) * std::exp(-0.25 * pi * q * q * s * s);
  return std::exp(-rho * s) * (regular + chaotic);
}

inline double berry_robnik_cdf(double s, double rho) {
  if (s <= 0.0) return 0.0;
  return boost::math::quadrature::gauss<double, 30>::integrate([rho](double x) { return berry_robnik_pdf(x, rho); },
                                                               0.0, s);
}

struct BerryRobnikFit {
  double rho = 0.0;
  double mean_log_likelihood = 0.0;  // per used spacing, unit-mean convention
  double ks_statistic = 0.0;         // sup |F_emp - F_fit|
  std::size_t used_spacings = 0;
  std::size_t dropped_zero_spacings = 0;
  bool zero_spacings_reportable = false;  // dropped fraction above 0.1%
};

/// Maximum-likelihood rho on [0, 1]. Spacings are rescaled from the median-1
/// to the mean-1 convention before fitting; exact zeros are dropped.
inline BerryRobnikFit fit_berry_robnik(const SpacingSample& sample) {
  require(!sample.spacings.empty(), "fit_berry_robnik: empty sample");
  const double mean = std::accumulate(sample.spacings.begin(), sample.spacings.end(), 0.0) /
                      static_cast<double>(sample.spacings.size());
  if (!(mean > 0.0)) throw NumericalError("fit_berry_robnik: all spacings are zero");

  BerryRobnikFit fit;
  std::vector<double> s;
  s.reserve(sample.spacings.size());
  for (double x : sample.spacings) {
    const double u = x / mean;
    if (u <= 1e-12) {
      ++fit.dropped_zero_spacings;
    } else {
      s.push_back(u);
    }
  }
  if (s.empty()) throw NumericalError("fit_berry_robnik: all spacings are zero");
  fit.used_spacings = s.size();
  fit.zero_spacings_reportable =
      static_cast<double>(fit.dropped_zero_spacings) > 1e-3 * static_cast<double>(sample.spacings.size());

  auto negative_ll = [&s](double rho) {
    double ll = 0.0;
    for (double x : s) ll += std::log(std::max(berry_robnik_pdf(x, rho), 1e-300));
    return -ll / static_cast<double>(s.size());
  };

  // Coarse scan guards against a non-unimodal likelihood, Brent refines.
  constexpr int grid = 50;
  int best = 0;
  double best_value = negative_ll(0.0);
  for (int k = 1; k <= grid; ++k) {
    const double v = negative_ll(static_cast<double>(k) / grid);
    if (v < best_value) {
      best_value = v;
      best = k;
    }
  }
  const double lo = std::max(0.0, (best - 1.0) / grid);
  const double hi = std::min(1.0, (best + 1.0) / grid);
  // 1e-4 absolute tolerance on rho needs ~14 bits.
  auto [rho, value] = boost::math::tools::brent_find_minima(negative_ll, lo, hi, 20);
  if (best_value < value) {
    rho = static_cast<double>(best) / grid;
    value = best_value;
  }
  fit.rho = std::clamp(rho, 0.0, 1.0);
  fit.mean_log_likelihood = -value;

  std::sort(s.begin(), s.end());
  double cdf = 0.0, prev = 0.0, ks = 0.0;
  const double count = static_cast<double>(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    cdf += boost::math::quadrature::gauss<double, 15>::integrate(
        [&fit](double x) { return berry_robnik_pdf(x, fit.rho); }, prev, s[k]);
    prev = s[k];
    ks = std::max({ks, std::abs(static_cast<double>(k + 1) / count - cdf), std::abs(static_cast<double>(k) / count - cdf)});
  }
  fit.ks_statistic = ks;
  return fit;
}

struct SpacingHistogramRow {
  double s = 0.0;  // bin centre, median-normalized
  double empirical_density = 0.0;
  double fitted_density = 0.0;
};

/// Histogram in the median-normalized convention with the fitted surmise
/// mapped to the same axis (s_median = s_mean * mean/median).
inline std::vector<SpacingHistogramRow> spacing_histogram(const SpacingSample& sample, const BerryRobnikFit& fit,
                                                          int bins = 40, double s_max = 4.0) {
  require(bins > 0 && s_max > 0.0, "spacing_histogram: bad binning");
  const double mean = std::accumulate(sample.spacings.begin(), sample.spacings.end(), 0.0) /
                      static_cast<double>(sample.spacings.size());
  const double width = s_max / bins;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double x : sample.spacings) {
    const auto b = static_cast<long>(x / width);
    if (b >= 0 && b < bins) counts[static_cast<std::size_t>(b)] += 1.0;
  }
  std::vector<SpacingHistogramRow> rows;
  const double total = static_cast<double>(sample.spacings.size());
  for (int b = 0; b < bins; ++b) {
    const double centre = (b + 0.5) * width;
    rows.push_back({centre, counts[static_cast<std::size_t>(b)] / (total * width),
                    berry_robnik_pdf(centre / mean, fit.rho) / mean});
  }
  return rows;
}

}  // namespace ethqbm
