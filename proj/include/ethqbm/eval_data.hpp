#pragma once

// Bernoulli-mixture data, visible-unit probability tables, KL and AIC.
//
// A visible configuration z in {-1,+1}^n_v is stored as an index whose bit
// (n_v-1-v) is set when z_v = -1, matching the register convention, so the
// visible index of a full basis state is its top n_v bits.

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/noise.hpp"
#include "ethqbm/spectral.hpp"
#include "ethqbm/spin_ops.hpp"
#include "ethqbm/thermal.hpp"

namespace ethqbm {

using ProbabilityTable = Eigen::VectorXd;

inline std::vector<int> visible_spins(std::uint32_t index, int n_visible) {
  std::vector<int> z(static_cast<std::size_t>(n_visible));
  for (int v = 0; v < n_visible; ++v) z[v] = spin_of(index, n_visible, v);
  return z;
}

inline std::uint32_t visible_index(std::span<const int> z) {
  const int n = static_cast<int>(z.size());
  std::uint32_t index = 0;
  for (int v = 0; v < n; ++v) {
    require(z[v] == 1 || z[v] == -1, "visible_index: spins must be +1 or -1");
    if (z[v] == -1) index |= site_bit(n, v);
  }
  return index;
}

/// '0' for +1, '1' for -1, site 0 first.
inline std::string bitstring(std::uint32_t index, int n_visible) {
  std::string s(static_cast<std::size_t>(n_visible), '0');
  for (int v = 0; v < n_visible; ++v) {
    if (index & site_bit(n_visible, v)) s[v] = '1';
  }
  return s;
}

inline std::uint32_t parse_bitstring(const std::string& s) {
  std::uint32_t index = 0;
  const int n = static_cast<int>(s.size());
  for (int v = 0; v < n; ++v) {
    require(s[v] == '0' || s[v] == '1', "parse_bitstring: expected only 0 and 1");
    if (s[v] == '1') index |= site_bit(n, v);
  }
  return index;
}

struct BernoulliMixture {
  int n_visible = 0;
  std::vector<double> fidelities;           // p_i in (0, 1]
  std::vector<std::vector<int>> centers;    // c_i in {-1,+1}^n_v

  int modes() const { return static_cast<int>(centers.size()); }

  void validate() const {
    require(n_visible >= 1 && n_visible <= kMaxQubits, "BernoulliMixture: bad visible count");
    require(!centers.empty() && centers.size() == fidelities.size(), "BernoulliMixture: need m >= 1 modes");
    for (std::size_t i = 0; i < centers.size(); ++i) {
      require(fidelities[i] > 0.0 && fidelities[i] <= 1.0, "BernoulliMixture: fidelity outside (0, 1]");
      require(centers[i].size() == static_cast<std::size_t>(n_visible), "BernoulliMixture: center length");
      for (int c : centers[i]) require(c == 1 || c == -1, "BernoulliMixture: centers must be +1/-1");
    }
  }
};

/// m modes with common fidelity p and uniformly random centers.
inline BernoulliMixture random_mixture(int n_visible, int modes, double fidelity, Rng& rng) {
  BernoulliMixture mix;
  mix.n_visible = n_visible;
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < modes; ++i) {
    std::vector<int> c(static_cast<std::size_t>(n_visible));
    for (auto& x : c) x = coin(rng) ? 1 : -1;
    mix.centers.push_back(std::move(c));
    mix.fidelities.push_back(fidelity);
  }
  mix.validate();
  return mix;
}

inline double mixture_probability(const BernoulliMixture& mix, std::span<const int> z) {
  require(z.size() == static_cast<std::size_t>(mix.n_visible), "mixture_probability: wrong configuration length");
  double total = 0.0;
  for (int i = 0; i < mix.modes(); ++i) {
    int d = 0;
    for (int v = 0; v < mix.n_visible; ++v) {
      require(z[v] == 1 || z[v] == -1, "mixture_probability: spins must be +1 or -1");
      d += z[v] != mix.centers[i][v];
    }
    const double p = mix.fidelities[i];
    total += std::pow(p, mix.n_visible - d) * std::pow(1.0 - p, d);
  }
  return total / mix.modes();
}

inline ProbabilityTable mixture_table(const BernoulliMixture& mix) {
  mix.validate();
  const std::uint32_t size = std::uint32_t{1} << mix.n_visible;
  ProbabilityTable t(size);
  for (std::uint32_t u = 0; u < size; ++u) t(u) = mixture_probability(mix, visible_spins(u, mix.n_visible));
  return t;
}

/// Visible means E[z_v] of a table.
inline std::vector<double> visible_means(const ProbabilityTable& table, int n_visible) {
  std::vector<double> m(static_cast<std::size_t>(n_visible), 0.0);
  for (Eigen::Index u = 0; u < table.size(); ++u) {
    for (int v = 0; v < n_visible; ++v) m[v] += table(u) * spin_of(static_cast<std::uint32_t>(u), n_visible, v);
  }
  return m;
}

/// I.i.d. draws as visible indices: a uniform mode, then each bit of its center
/// flipped with probability 1 - p_i.
inline std::vector<std::uint32_t> sample_mixture(const BernoulliMixture& mix, int count, Rng& rng) {
  mix.validate();
  require(count >= 1, "sample_mixture: count must be at least 1");
  std::uniform_int_distribution<int> pick(0, mix.modes() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const int i = pick(rng);
    std::vector<int> z = mix.centers[i];
    for (auto& x : z) {
      if (u(rng) >= mix.fidelities[i]) x = -x;
    }
    out.push_back(visible_index(z));
  }
  return out;
}

inline ProbabilityTable empirical_table(std::span<const std::uint32_t> samples, int n_visible) {
  require(!samples.empty(), "empirical_table: no samples");
  ProbabilityTable t = ProbabilityTable::Zero(Eigen::Index{1} << n_visible);
  for (auto s : samples) t(s) += 1.0;
  return t / static_cast<double>(samples.size());
}

inline constexpr double kProbabilityFloor = 1e-12;

struct KlResult {
  double value = 0.0;  // nats
  bool floored = false;
};

inline void check_normalized(const ProbabilityTable& t, const char* what) {
  require(t.size() > 0 && (t.array() >= 0.0).all(), std::string(what) + ": negative probability");
  require(std::abs(t.sum() - 1.0) <= 1e-9, std::string(what) + ": table is not normalized");
}

/// sum p_data ln(p_data / p_model), 0 ln 0 = 0, p_model floored at 1e-12.
inline KlResult kl_divergence(const ProbabilityTable& p_data, const ProbabilityTable& p_model) {
  require(p_data.size() == p_model.size(), "kl_divergence: tables have different supports");
  check_normalized(p_data, "kl_divergence");
  check_normalized(p_model, "kl_divergence");
  KlResult r;
  for (Eigen::Index u = 0; u < p_data.size(); ++u) {
    if (p_data(u) == 0.0) continue;
    double q = p_model(u);
    if (q < kProbabilityFloor) {
      q = kProbabilityFloor;
      r.floored = true;
    }
    r.value += p_data(u) * std::log(p_data(u) / q);
  }
  return r;
}

/// -sum p_data ln p_model with the same floor as kl_divergence.
inline KlResult cross_entropy(const ProbabilityTable& p_data, const ProbabilityTable& p_model) {
  require(p_data.size() == p_model.size(), "cross_entropy: tables have different supports");
  KlResult r;
  for (Eigen::Index u = 0; u < p_data.size(); ++u) {
    if (p_data(u) == 0.0) continue;
    double q = p_model(u);
    if (q < kProbabilityFloor) {
      q = kProbabilityFloor;
      r.floored = true;
    }
    r.value -= p_data(u) * std::log(q);
  }
  return r;
}

inline double aic(double loss, std::size_t trainable) {
  require(std::isfinite(loss), "aic: loss must be finite");
  return 2.0 * (static_cast<double>(trainable) + loss);
}

/// Biases and weights; Gamma and the thermometer are not trained.
inline std::size_t qbm_trainable_count(const SystemLayout& layout, const ModelSpec& spec) {
  return trainable_count(layout, spec);
}

inline std::size_t rbm_trainable_count(int n_visible, int n_hidden) {
  return static_cast<std::size_t>(n_visible + n_hidden + n_visible * n_hidden);
}

/// Sum a full-register distribution over everything below the top n_v bits.
inline ProbabilityTable visible_marginal(const Eigen::VectorXd& populations, int n_visible, int n_total) {
  require(populations.size() == (Eigen::Index{1} << n_total) && n_visible <= n_total, "visible_marginal: bad sizes");
  const int shift = n_total - n_visible;
  ProbabilityTable t = ProbabilityTable::Zero(Eigen::Index{1} << n_visible);
  for (Eigen::Index i = 0; i < populations.size(); ++i) t(i >> shift) += populations(i);
  return t;
}

/// H_QBM on the QBM sites alone.
inline PauliSum qbm_block(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p) {
  return restrict_to_sites(hamiltonian_terms(layout, spec, p).qbm, layout.qbm_sites());
}

/// p_beta(z_v) = tr(Pi_z e^{-beta H_QBM}) / Z from a spectrum of the QBM block.
inline ProbabilityTable qbm_visible_table(const EigenSystem& qbm_eig, int n_visible, double beta) {
  return visible_marginal(gibbs_populations(qbm_eig, beta), n_visible, qbm_eig.qubits);
}

inline ProbabilityTable qbm_visible_table(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p,
                                          double beta) {
  return qbm_visible_table(eig_hermitian(qbm_block(layout, spec, p).to_dense()), layout.n_visible(), beta);
}

/// Born probabilities of the visible outcomes after a quench from |+>^n,
/// averaged uniformly over `times`. With channels enabled the noisy density
/// state is used (and `rng` drives the channel durations).
inline ProbabilityTable quench_visible_table(const EigenSystem& total_eig, int n_visible, std::span<const double> times,
                                             const NoiseConfig* noise = nullptr, Rng* rng = nullptr) {
  require(!times.empty(), "quench_visible_table: need at least one time");
  const bool channels = noise != nullptr && noise->channels_enabled();
  require(!channels || rng != nullptr, "quench_visible_table: noise needs an rng");
  const Eigen::VectorXcd coeffs = eigenbasis_coefficients(total_eig, plus_state(total_eig.qubits));
  ProbabilityTable acc = ProbabilityTable::Zero(Eigen::Index{1} << n_visible);
  for (double t : times) {
    const Eigen::VectorXd pops = channels ? noisy_quench_state(total_eig, t, *noise, *rng).populations()
                                          : Eigen::VectorXd(evolve_coefficients(total_eig, coeffs, t).cwiseAbs2());
    acc += visible_marginal(pops, n_visible, total_eig.qubits);
  }
  acc /= static_cast<double>(times.size());
  return acc / acc.sum();
}

/// Multinomial resampling of a table with `samples` draws.
inline ProbabilityTable resample_table(const ProbabilityTable& table, int samples, Rng& rng) {
  require(samples >= 1, "resample_table: sample budget must be positive");
  std::discrete_distribution<std::uint32_t> dist(table.data(), table.data() + table.size());
  ProbabilityTable out = ProbabilityTable::Zero(table.size());
  for (int k = 0; k < samples; ++k) out(dist(rng)) += 1.0;
  return out / static_cast<double>(samples);
}

inline void write_table_csv(std::ostream& os, const ProbabilityTable& table, int n_visible) {
  require(table.size() == (Eigen::Index{1} << n_visible), "write_table_csv: table size");
  os << "bitstring,probability\n";
  char buf[64];
  for (Eigen::Index u = 0; u < table.size(); ++u) {
    std::snprintf(buf, sizeof buf, "%.17g", table(u));
    os << bitstring(static_cast<std::uint32_t>(u), n_visible) << ',' << buf << '\n';
  }
}

inline ProbabilityTable read_table_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == "bitstring,probability", "read_table_csv: bad header");
  std::vector<std::pair<std::uint32_t, double>> rows;
  int n = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "read_table_csv: malformed row");
    const std::string bits = line.substr(0, comma);
    if (n < 0) n = static_cast<int>(bits.size());
    require(static_cast<int>(bits.size()) == n, "read_table_csv: inconsistent bitstring length");
    rows.emplace_back(parse_bitstring(bits), std::stod(line.substr(comma + 1)));
  }
  require(n > 0 && rows.size() == (std::size_t{1} << n), "read_table_csv: incomplete table");
  ProbabilityTable t = ProbabilityTable::Zero(static_cast<Eigen::Index>(rows.size()));
  for (const auto& [u, p] : rows) t(u) = p;
  return t;
}

}  // namespace ethqbm
