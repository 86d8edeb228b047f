#include <gtest/gtest.h>

#include "ethqbm/spin_ops.hpp"
#include "ethqbm/spectral.hpp"
#include "oracles.hpp"

using namespace ethqbm;

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

QbmParameters random_parameters(const SystemLayout& layout, const ModelSpec& spec, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  QbmParameters p;
  for (int s = 0; s < layout.total(); ++s) {
    p.gamma.push_back(1.0 + 0.3 * n(rng));
    p.bias.push_back(n(rng));
  }
  for (std::size_t k = 0; k < spec.qbm_edges.size(); ++k) p.qbm_weights.push_back(n(rng));
  for (std::size_t k = 0; k < spec.thermometer_edges.size(); ++k) p.thermometer_weights.push_back(n(rng));
  for (std::size_t k = 0; k < spec.interaction_edges.size(); ++k) p.interaction_weights.push_back(n(rng));
  return p;
}

/// The same Hamiltonian assembled from Kronecker products.
Eigen::MatrixXcd kron_hamiltonian(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p) {
  const int n = layout.total();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(1 << n, 1 << n);
  for (int s = 0; s < n; ++s) h += p.gamma[s] * oracle::site_op(s, 'x', n) + p.bias[s] * oracle::site_op(s, 'z', n);
  auto coupling = [&](const Edge& e, double w, bool xx) {
    h += w * oracle::site_op(e.a, 'z', n) * oracle::site_op(e.b, 'z', n);
    if (xx) h += w * oracle::site_op(e.a, 'x', n) * oracle::site_op(e.b, 'x', n);
  };
  const bool xx = spec.family == ModelFamily::restricted_xx;
  for (std::size_t k = 0; k < spec.qbm_edges.size(); ++k) coupling(spec.qbm_edges[k], p.qbm_weights[k], xx);
  for (std::size_t k = 0; k < spec.thermometer_edges.size(); ++k) {
    coupling(spec.thermometer_edges[k], p.thermometer_weights[k], xx);
  }
  for (std::size_t k = 0; k < spec.interaction_edges.size(); ++k) {
    coupling(spec.interaction_edges[k], p.interaction_weights[k], false);
  }
  return h;
}

}  // namespace

TEST(Pauli, SingleQubitZ) {
  const auto z = build_pauli(0, PauliAxis::z, 1);
  Eigen::Matrix2cd expect;
  expect << 1, 0, 0, -1;
  EXPECT_EQ(max_abs(z.matrix() - expect), 0.0);
}

TEST(Pauli, XOnSecondOfTwo) {
  const auto x = build_pauli(1, PauliAxis::x, 2);
  EXPECT_EQ(max_abs(x.matrix() - oracle::kron(oracle::pauli('i'), oracle::pauli('x'))), 0.0);
}

TEST(Pauli, MatchesKroneckerOracleAndSquaresToIdentity) {
  for (int n = 1; n <= 4; ++n) {
    for (int s = 0; s < n; ++s) {
      for (auto [axis, c] : {std::pair{PauliAxis::x, 'x'}, {PauliAxis::y, 'y'}, {PauliAxis::z, 'z'}}) {
        const auto p = build_pauli(s, axis, n);
        EXPECT_EQ(max_abs(p.matrix() - oracle::site_op(s, c, n)), 0.0);
        EXPECT_TRUE(p.is_hermitian());
        EXPECT_EQ(max_abs(p.matrix() * p.matrix() - Eigen::MatrixXcd::Identity(1 << n, 1 << n)), 0.0);
      }
    }
  }
}

TEST(Pauli, XAndZAnticommuteOnSameSite) {
  const auto x = build_pauli(0, PauliAxis::x, 3).matrix();
  const auto z = build_pauli(0, PauliAxis::z, 3).matrix();
  EXPECT_EQ(max_abs(x * z + z * x), 0.0);
}

TEST(Pauli, RejectsBadArguments) {
  EXPECT_THROW(build_pauli(3, PauliAxis::x, 3), InvalidArgument);
  EXPECT_THROW(build_pauli(-1, PauliAxis::x, 3), InvalidArgument);
  EXPECT_THROW(build_pauli(0, PauliAxis::x, 15), InvalidArgument);
}

TEST(PauliSum, ProductFollowsPauliAlgebra) {
  PauliSum a(2), b(2);
  a.add(1.0, site_bit(2, 0), site_bit(2, 0));  // X0 Z0 in X^a Z^b order
  b.add(1.0, site_bit(2, 0), site_bit(2, 0));
  const Eigen::MatrixXcd dense = a.to_dense().matrix() * b.to_dense().matrix();
  EXPECT_LT(max_abs((a * b).to_dense().matrix() - dense), 1e-14);
}

TEST(PauliSum, RestrictToSitesKeepsOperator) {
  PauliSum op(4);
  op.add_zz(0.7, 1, 3).add_x(-0.2, 3);
  const std::vector<int> keep{1, 3};
  const auto r = restrict_to_sites(op, keep);
  const Eigen::MatrixXcd expect = 0.7 * oracle::site_op(0, 'z', 2) * oracle::site_op(1, 'z', 2) -
                                  0.2 * oracle::site_op(1, 'x', 2);
  EXPECT_LT(max_abs(r.to_dense().matrix() - expect), 1e-15);
  const std::vector<int> bad{0, 1};
  EXPECT_THROW(restrict_to_sites(op, bad), InvalidArgument);
}

TEST(Layout, RolesAndInvariants) {
  SystemLayout l(3, 1, 2);
  EXPECT_EQ(l.total(), 6);
  EXPECT_EQ(l.role(0), SiteRole::visible);
  EXPECT_EQ(l.role(3), SiteRole::hidden);
  EXPECT_EQ(l.role(4), SiteRole::thermometer);
  std::vector<int> all;
  for (auto v : {l.visible_sites(), l.hidden_sites(), l.thermometer_sites()}) all.insert(all.end(), v.begin(), v.end());
  for (int s = 0; s < l.total(); ++s) EXPECT_EQ(all[s], s);
  EXPECT_THROW(SystemLayout(0, 1, 1), InvalidArgument);
  EXPECT_THROW(SystemLayout(10, 3, 2), InvalidArgument);
}

TEST(ModelSpec, FamilyConnectivity) {
  const SystemLayout l(3, 2, 2);
  for (auto f : {ModelFamily::semi_restricted_transverse_ising, ModelFamily::restricted_transverse_ising,
                 ModelFamily::restricted_xx}) {
    const auto spec = ModelSpec::standard(l, f);
    EXPECT_NO_THROW(spec.validate(l));
    int vv = 0;
    for (const auto& e : spec.qbm_edges) {
      EXPECT_FALSE(l.role(e.a) == SiteRole::hidden && l.role(e.b) == SiteRole::hidden);
      vv += l.role(e.a) == SiteRole::visible && l.role(e.b) == SiteRole::visible;
    }
    EXPECT_EQ(vv, f == ModelFamily::semi_restricted_transverse_ising ? 3 : 0);
    EXPECT_EQ(spec.interaction_edges.size(), 2u);
    for (const auto& e : spec.interaction_edges) {
      EXPECT_EQ(l.role(e.a), SiteRole::visible);
      EXPECT_EQ(l.role(e.b), SiteRole::thermometer);
    }
  }
  auto bad = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  bad.qbm_edges.push_back({0, 1});
  EXPECT_THROW(bad.validate(l), InvalidArgument);
  bad = ModelSpec::standard(l, ModelFamily::semi_restricted_transverse_ising);
  bad.qbm_edges.push_back({3, 4});
  EXPECT_THROW(bad.validate(l), InvalidArgument);
}

TEST(Hamiltonian, ZeroParametersGiveZero) {
  const SystemLayout l(2, 1, 1);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  QbmParameters p;
  p.gamma.assign(4, 0.0);
  p.bias.assign(4, 0.0);
  p.qbm_weights.assign(spec.qbm_edges.size(), 0.0);
  p.thermometer_weights.assign(spec.thermometer_edges.size(), 0.0);
  p.interaction_weights.assign(spec.interaction_edges.size(), 0.0);
  EXPECT_EQ(max_abs(build_hamiltonian(l, spec, p).total.matrix()), 0.0);
}

TEST(Hamiltonian, TwoQubitRestrictedIsingExample) {
  const SystemLayout l(1, 1, 0);
  auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  QbmParameters p{{1, 1}, {0, 0}, {1}, {}, {}};
  const Eigen::MatrixXcd expect = oracle::kron(oracle::pauli('x'), oracle::pauli('i')) +
                                  oracle::kron(oracle::pauli('i'), oracle::pauli('x')) +
                                  oracle::kron(oracle::pauli('z'), oracle::pauli('z'));
  EXPECT_LT(max_abs(build_hamiltonian(l, spec, p).total.matrix() - expect), 1e-15);

  spec = ModelSpec::standard(l, ModelFamily::restricted_xx);
  const Eigen::MatrixXcd with_xx = expect + oracle::kron(oracle::pauli('x'), oracle::pauli('x'));
  EXPECT_LT(max_abs(build_hamiltonian(l, spec, p).total.matrix() - with_xx), 1e-15);
}

TEST(Hamiltonian, MatchesKroneckerAssemblyAndBlocks) {
  Rng rng(11);
  for (auto f : {ModelFamily::semi_restricted_transverse_ising, ModelFamily::restricted_transverse_ising,
                 ModelFamily::restricted_xx}) {
    const SystemLayout l(2, 1, 2);
    const auto spec = ModelSpec::standard(l, f);
    const auto p = random_parameters(l, spec, rng);
    const auto h = build_hamiltonian(l, spec, p);
    EXPECT_LT(max_abs(h.total.matrix() - kron_hamiltonian(l, spec, p)), 1e-13);
    EXPECT_LT(h.total.hermiticity_error(), 1e-12);
    EXPECT_LT(max_abs(h.total.matrix() - h.qbm.matrix() - h.thermometer.matrix() - h.interaction.matrix()), 1e-13);

    // H_therm commutes with every non-thermometer Pauli: it acts only on thermometer sites.
    for (int s : l.qbm_sites()) {
      for (char a : {'x', 'z'}) {
        const auto o = oracle::site_op(s, a, l.total());
        EXPECT_LT(max_abs(h.thermometer.matrix() * o - o * h.thermometer.matrix()), 1e-13);
      }
    }
    // H_int is diagonal coupling only.
    for (int v : l.visible_sites()) {
      const auto z = oracle::site_op(v, 'z', l.total());
      EXPECT_LT(max_abs(h.interaction.matrix() * z - z * h.interaction.matrix()), 1e-13);
    }
  }
}

TEST(Hamiltonian, ClassicalLimitIsDiagonal) {
  Rng rng(5);
  const SystemLayout l(3, 1, 2);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  auto p = random_parameters(l, spec, rng);
  std::fill(p.gamma.begin(), p.gamma.end(), 0.0);
  const auto& m = build_hamiltonian(l, spec, p).total.matrix();
  Eigen::MatrixXcd off = m;
  off.diagonal().setZero();
  EXPECT_EQ(max_abs(off), 0.0);
}

TEST(Hamiltonian, MismatchedEdgeSetsThrow) {
  const SystemLayout l(2, 1, 0);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  QbmParameters p{{1, 1, 1}, {0, 0, 0}, {0.1}, {}, {}};
  EXPECT_THROW(build_hamiltonian(l, spec, p), InvalidArgument);
}

TEST(Clamped, TwoQubitExample) {
  const SystemLayout l(1, 1, 0);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  const double g_h = 0.7, b_v = 0.3, b_h = -0.4, w = 1.1;
  QbmParameters p{{0.9, g_h}, {b_v, b_h}, {w}, {}, {}};
  const std::vector<int> z{+1};
  const auto c = build_clamped_hamiltonian(l, spec, p, z);
  Eigen::Matrix2cd expect = g_h * oracle::pauli('x') + (b_h + w) * oracle::pauli('z');
  EXPECT_LT(max_abs(c.reduced.matrix() - expect), 1e-15);
  EXPECT_DOUBLE_EQ(c.offset, b_v);

  // same thing by projecting the full 4x4 matrix onto the visible-up states
  const auto h = build_hamiltonian(l, spec, p).total.matrix();
  EXPECT_LT(max_abs(h.topLeftCorner(2, 2) - (expect + b_v * Eigen::Matrix2cd::Identity())), 1e-15);
}

TEST(Clamped, DecoupledOffsetIsBiasSum) {
  const SystemLayout l(3, 1, 0);
  const auto spec = ModelSpec::standard(l, ModelFamily::semi_restricted_transverse_ising);
  QbmParameters p;
  p.gamma = {1, 1, 1, 0.5};
  p.bias = {0.2, -0.3, 0.5, 0.25};
  p.qbm_weights.assign(spec.qbm_edges.size(), 0.0);
  const std::vector<int> z{1, -1, -1};
  const auto c = build_clamped_hamiltonian(l, spec, p, z);
  EXPECT_NEAR(c.offset, 0.2 + 0.3 - 0.5, 1e-15);
  const Eigen::Matrix2cd hidden = 0.5 * oracle::pauli('x') + 0.25 * oracle::pauli('z');
  EXPECT_LT(max_abs(c.reduced.matrix() - hidden), 1e-15);
}

TEST(Clamped, ReducedOperatorIsHermitianForEveryAssignment) {
  Rng rng(8);
  const SystemLayout l(3, 1, 1);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_xx);
  const auto p = random_parameters(l, spec, rng);
  for (int u = 0; u < 8; ++u) {
    const std::vector<int> z{(u & 4) ? -1 : 1, (u & 2) ? -1 : 1, (u & 1) ? -1 : 1};
    EXPECT_LT(build_clamped_hamiltonian(l, spec, p, z).reduced.hermiticity_error(), 1e-12);
  }
}

// tr(O e^{-beta H_z}) on the reduced space, times e^{-beta offset}, equals the
// brute-force trace of O P e^{-beta P H P} P over the full space.
TEST(Clamped, TraceConsistencyWithProjectorConstruction) {
  Rng rng(21);
  const double beta = 0.8;
  for (auto f : {ModelFamily::semi_restricted_transverse_ising, ModelFamily::restricted_transverse_ising,
                 ModelFamily::restricted_xx}) {
    const SystemLayout l(3, 1, 2);
    const auto spec = ModelSpec::standard(l, f);
    const auto p = random_parameters(l, spec, rng);
    const int n = l.total();
    const auto h = build_hamiltonian(l, spec, p).total.matrix();
    const Eigen::MatrixXcd obs_full = oracle::site_op(3, 'z', n) + 0.5 * oracle::site_op(4, 'x', n);
    // the same observable on the reduced register (sites 3, 4, 5 -> 0, 1, 2)
    const Eigen::MatrixXcd obs_red = oracle::site_op(0, 'z', 3) + 0.5 * oracle::site_op(1, 'x', 3);
    for (int u = 0; u < 8; ++u) {
      const std::vector<int> z{(u & 4) ? -1 : 1, (u & 2) ? -1 : 1, (u & 1) ? -1 : 1};
      const auto proj = oracle::visible_projector(z, n);
      const Eigen::MatrixXcd e_full = proj * oracle::expm(-beta * proj * h * proj) * proj;
      const std::complex<double> brute = (obs_full * e_full).trace();
      const auto c = build_clamped_hamiltonian(l, spec, p, z);
      const std::complex<double> reduced =
          std::exp(-beta * c.offset) * (obs_red * oracle::expm(-beta * c.reduced.matrix())).trace();
      EXPECT_NEAR(brute.real(), reduced.real(), 1e-10 * std::max(1.0, std::abs(brute)));
      EXPECT_NEAR(brute.imag(), 0.0, 1e-10 * std::max(1.0, std::abs(brute)));
      const std::complex<double> z_full = e_full.trace();
      const double z_red = std::exp(-beta * c.offset) * oracle::expm(-beta * c.reduced.matrix()).trace().real();
      EXPECT_NEAR(z_full.real(), z_red, 1e-10 * z_red);
    }
  }
}

TEST(Init, SymmetricDataGivesZeroVisibleBias) {
  EXPECT_EQ(visible_bias_from_mean(0.0), 0.0);
  EXPECT_NEAR(visible_bias_from_mean(0.8), std::log(0.9 / 0.1), 1e-12);
  // unanimous bits are clipped to [1e-3, 1 - 1e-3]
  EXPECT_NEAR(visible_bias_from_mean(1.0), std::log(0.999 / 0.001), 1e-9);
  EXPECT_NEAR(visible_bias_from_mean(-1.0), -std::log(0.999 / 0.001), 1e-9);
}

TEST(Init, DistributionsAndFrozenParts) {
  const SystemLayout l(1, 12, 1);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  Rng rng(2024);
  const std::vector<double> means{0.0};
  double gamma_sum = 0.0, hidden_ss = 0.0, weight_ss = 0.0;
  std::size_t gamma_n = 0, hidden_n = 0, weight_n = 0;
  for (int rep = 0; rep < 8400; ++rep) {
    const auto p = init_parameters(l, spec, means, rng);
    EXPECT_EQ(p.bias[0], 0.0);
    for (int h : l.hidden_sites()) {
      hidden_ss += p.bias[h] * p.bias[h];
      ++hidden_n;
    }
    for (double g : p.gamma) {
      gamma_sum += g;
      ++gamma_n;
    }
    for (double w : p.qbm_weights) {
      weight_ss += w * w;
      ++weight_n;
    }
  }
  ASSERT_GE(hidden_n, 100000u);
  EXPECT_NEAR(hidden_ss / hidden_n, 2.5e-5, 2.5e-6);
  EXPECT_NEAR(weight_ss / weight_n, 1e-4, 1e-5);
  EXPECT_NEAR(gamma_sum / gamma_n, 1.0, 1e-4);
}

TEST(Init, TrainableMaskExcludesThermometerAndInteraction) {
  const SystemLayout l(3, 1, 2);
  const auto spec = ModelSpec::standard(l, ModelFamily::restricted_transverse_ising);
  Rng rng(1);
  const std::vector<double> means{0.1, -0.2, 0.3};
  auto p = init_parameters(l, spec, means, rng);
  const auto before = p;
  auto theta = trainable_values(l, p);
  EXPECT_EQ(theta.size(), trainable_count(l, spec));
  for (auto& x : theta) x += 1.0;
  set_trainable_values(l, p, theta);
  EXPECT_EQ(p.thermometer_weights, before.thermometer_weights);
  EXPECT_EQ(p.interaction_weights, before.interaction_weights);
  EXPECT_EQ(p.gamma, before.gamma);
  for (int s : l.thermometer_sites()) EXPECT_EQ(p.bias[s], before.bias[s]);
}
