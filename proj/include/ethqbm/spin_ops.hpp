#pragma once

// QBM / thermometer system description and Hamiltonian construction.

#include <algorithm>
#include <compare>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/operators.hpp"

namespace ethqbm {

enum class SiteRole { visible, hidden, thermometer };

/// Sites are ordered visible, then hidden, then thermometer.
class SystemLayout {
 public:
  SystemLayout() = default;
  SystemLayout(int n_visible, int n_hidden, int n_thermometer)
      : n_visible_(n_visible), n_hidden_(n_hidden), n_thermometer_(n_thermometer) {
    require(n_visible >= 1, "SystemLayout: need at least one visible unit");
    require(n_hidden >= 0 && n_thermometer >= 0, "SystemLayout: negative unit count");
    require(total() <= kMaxQubits, "SystemLayout: more than 14 qubits");
  }

  int n_visible() const { return n_visible_; }
  int n_hidden() const { return n_hidden_; }
  int n_thermometer() const { return n_thermometer_; }
  int total() const { return n_visible_ + n_hidden_ + n_thermometer_; }
  int qbm_size() const { return n_visible_ + n_hidden_; }

  SiteRole role(int site) const {
    require(site >= 0 && site < total(), "SystemLayout: site out of range");
    if (site < n_visible_) return SiteRole::visible;
    if (site < n_visible_ + n_hidden_) return SiteRole::hidden;
    return SiteRole::thermometer;
  }

  std::vector<int> visible_sites() const { return range(0, n_visible_); }
  std::vector<int> hidden_sites() const { return range(n_visible_, n_visible_ + n_hidden_); }
  std::vector<int> thermometer_sites() const { return range(qbm_size(), total()); }
  std::vector<int> qbm_sites() const { return range(0, qbm_size()); }
  /// Everything that is not a visible unit, in site order.
  std::vector<int> unclamped_sites() const { return range(n_visible_, total()); }

  SystemLayout without_thermometer() const { return {n_visible_, n_hidden_, 0}; }

  /// Thermometer units split like a QBM of the same family: the last unit is
  /// its hidden unit when there are at least two.
  int thermometer_hidden_count() const { return n_thermometer_ >= 2 ? 1 : 0; }

  friend bool operator==(const SystemLayout&, const SystemLayout&) = default;

 private:
  static std::vector<int> range(int begin, int end) {
    std::vector<int> out;
    for (int s = begin; s < end; ++s) out.push_back(s);
    return out;
  }

  int n_visible_ = 1;
  int n_hidden_ = 0;
  int n_thermometer_ = 0;
};

enum class ModelFamily { semi_restricted_transverse_ising, restricted_transverse_ising, restricted_xx };

inline std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::semi_restricted_transverse_ising: return "semi_restricted_transverse_ising";
    case ModelFamily::restricted_transverse_ising: return "restricted_transverse_ising";
    case ModelFamily::restricted_xx: return "restricted_xx";
  }
  return "unknown";
}

inline ModelFamily parse_model_family(std::string_view name) {
  for (auto f : {ModelFamily::semi_restricted_transverse_ising, ModelFamily::restricted_transverse_ising,
                 ModelFamily::restricted_xx}) {
    if (name == to_string(f)) return f;
  }
  if (name == "semi_restricted" || name == "srti") return ModelFamily::semi_restricted_transverse_ising;
  if (name == "restricted" || name == "rti") return ModelFamily::restricted_transverse_ising;
  if (name == "xx") return ModelFamily::restricted_xx;
  throw InvalidArgument("unknown model family: " + std::string(name));
}

struct Edge {
  int a = 0;
  int b = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline std::string edge_key(const Edge& e) { return std::to_string(e.a) + "-" + std::to_string(e.b); }

/// Model family plus the three coupling graphs: QBM-internal, thermometer-internal,
/// and QBM-visible to thermometer (always sigma^z sigma^z).
struct ModelSpec {
  ModelFamily family = ModelFamily::restricted_transverse_ising;
  std::vector<Edge> qbm_edges;
  std::vector<Edge> thermometer_edges;
  std::vector<Edge> interaction_edges;

  /// Full connectivity allowed by the family. The interaction is sparse: visible
  /// site k couples to thermometer site k for k < min(2, n_v, n_t) by default.
  static ModelSpec standard(const SystemLayout& layout, ModelFamily family, int interaction_pairs = -1) {
    ModelSpec spec;
    spec.family = family;
    const bool semi = family == ModelFamily::semi_restricted_transverse_ising;
    const int nv = layout.n_visible();
    const int nh = layout.n_hidden();
    for (int v = 0; v < nv; ++v) {
      if (semi) {
        for (int u = v + 1; u < nv; ++u) spec.qbm_edges.push_back({v, u});
      }
      for (int h = nv; h < nv + nh; ++h) spec.qbm_edges.push_back({v, h});
    }
    std::sort(spec.qbm_edges.begin(), spec.qbm_edges.end());

    const int t0 = layout.qbm_size();
    const int nt = layout.n_thermometer();
    const int th = layout.thermometer_hidden_count();
    const int tv = nt - th;
    for (int v = 0; v < tv; ++v) {
      if (semi) {
        for (int u = v + 1; u < tv; ++u) spec.thermometer_edges.push_back({t0 + v, t0 + u});
      }
      for (int h = tv; h < nt; ++h) spec.thermometer_edges.push_back({t0 + v, t0 + h});
    }
    std::sort(spec.thermometer_edges.begin(), spec.thermometer_edges.end());

    if (nt > 0) {
      const int pairs = interaction_pairs < 0 ? std::min({2, nv, nt}) : interaction_pairs;
      require(pairs <= nv && pairs <= nt, "ModelSpec: more interaction pairs than units");
      for (int k = 0; k < pairs; ++k) spec.interaction_edges.push_back({k, t0 + k});
    }
    return spec;
  }

  void validate(const SystemLayout& layout) const {
    const bool semi = family == ModelFamily::semi_restricted_transverse_ising;
    auto check_edge = [&](const Edge& e) {
      require(e.a >= 0 && e.b < layout.total() && e.a < e.b, "ModelSpec: edge " + edge_key(e) + " is malformed");
    };
    for (const auto& e : qbm_edges) {
      check_edge(e);
      const auto ra = layout.role(e.a), rb = layout.role(e.b);
      require(ra != SiteRole::thermometer && rb != SiteRole::thermometer,
              "ModelSpec: QBM edge " + edge_key(e) + " touches the thermometer");
      require(!(ra == SiteRole::hidden && rb == SiteRole::hidden), "ModelSpec: hidden-hidden edge " + edge_key(e));
      if (ra == SiteRole::visible && rb == SiteRole::visible) {
        require(semi, "ModelSpec: visible-visible edge " + edge_key(e) + " needs the semi-restricted family");
      }
    }
    const int t0 = layout.qbm_size();
    const int tv = layout.n_thermometer() - layout.thermometer_hidden_count();
    for (const auto& e : thermometer_edges) {
      check_edge(e);
      require(layout.role(e.a) == SiteRole::thermometer && layout.role(e.b) == SiteRole::thermometer,
              "ModelSpec: thermometer edge " + edge_key(e) + " leaves the thermometer");
      const bool a_hidden = e.a - t0 >= tv, b_hidden = e.b - t0 >= tv;
      require(!(a_hidden && b_hidden), "ModelSpec: hidden-hidden thermometer edge " + edge_key(e));
      if (!a_hidden && !b_hidden) require(semi, "ModelSpec: visible-visible thermometer edge needs semi-restricted");
    }
    for (const auto& e : interaction_edges) {
      check_edge(e);
      require(layout.role(e.a) == SiteRole::visible && layout.role(e.b) == SiteRole::thermometer,
              "ModelSpec: interaction edge " + edge_key(e) + " must join a visible and a thermometer site");
    }
  }
};

/// Field, bias and coupling values, all in energy units. Weight vectors are
/// aligned with the corresponding ModelSpec edge lists. Only the QBM biases
/// and QBM weights are trainable.
struct QbmParameters {
  std::vector<double> gamma;
  std::vector<double> bias;
  std::vector<double> qbm_weights;
  std::vector<double> thermometer_weights;
  std::vector<double> interaction_weights;

  void validate(const SystemLayout& layout, const ModelSpec& spec) const {
    const auto n = static_cast<std::size_t>(layout.total());
    require(gamma.size() == n && bias.size() == n, "QbmParameters: gamma/bias length differs from site count");
    require(qbm_weights.size() == spec.qbm_edges.size(), "QbmParameters: QBM weights do not match the edge set");
    require(thermometer_weights.size() == spec.thermometer_edges.size(),
            "QbmParameters: thermometer weights do not match the edge set");
    require(interaction_weights.size() == spec.interaction_edges.size(),
            "QbmParameters: interaction weights do not match the edge set");
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    require(finite(gamma) && finite(bias) && finite(qbm_weights) && finite(thermometer_weights) &&
                finite(interaction_weights),
            "QbmParameters: non-finite entry");
  }

  friend bool operator==(const QbmParameters&, const QbmParameters&) = default;
};

inline std::size_t trainable_count(const SystemLayout& layout, const ModelSpec& spec) {
  return static_cast<std::size_t>(layout.qbm_size()) + spec.qbm_edges.size();
}

/// [QBM biases (sites 0..n_v+n_h-1), QBM weights].
inline std::vector<double> trainable_values(const SystemLayout& layout, const QbmParameters& p) {
  std::vector<double> out(p.bias.begin(), p.bias.begin() + layout.qbm_size());
  out.insert(out.end(), p.qbm_weights.begin(), p.qbm_weights.end());
  return out;
}

inline void set_trainable_values(const SystemLayout& layout, QbmParameters& p, std::span<const double> values) {
  const auto nq = static_cast<std::size_t>(layout.qbm_size());
  require(values.size() == nq + p.qbm_weights.size(), "set_trainable_values: length mismatch");
  std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(nq), p.bias.begin());
  std::copy(values.begin() + static_cast<std::ptrdiff_t>(nq), values.end(), p.qbm_weights.begin());
}

/// Operator multiplying one coupling weight: Z_a Z_b, or X_a X_b + Z_a Z_b for the XX family.
inline PauliSum coupling_operator(ModelFamily family, int n_qubits, const Edge& e, double weight = 1.0) {
  PauliSum op(n_qubits);
  op.add_zz(weight, e.a, e.b);
  if (family == ModelFamily::restricted_xx) op.add_xx(weight, e.a, e.b);
  return op;
}

/// Gradient observables in trainable order: Z_i for each QBM bias, then one
/// coupling operator per QBM edge. Built on `n_qubits` (the full register or the QBM block).
inline std::vector<PauliSum> trainable_observables(const SystemLayout& layout, const ModelSpec& spec, int n_qubits) {
  std::vector<PauliSum> out;
  for (int s = 0; s < layout.qbm_size(); ++s) out.push_back(PauliSum(n_qubits).add_z(1.0, s));
  for (const auto& e : spec.qbm_edges) out.push_back(coupling_operator(spec.family, n_qubits, e));
  return out;
}

struct HamiltonianTerms {
  PauliSum qbm;
  PauliSum thermometer;
  PauliSum interaction;
  PauliSum total() const { return qbm + thermometer + interaction; }
};

/// Pauli-sum form of H_QBM, H_therm and H_int on the full register.
inline HamiltonianTerms hamiltonian_terms(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p) {
  spec.validate(layout);
  p.validate(layout, spec);
  const int n = layout.total();
  HamiltonianTerms h{PauliSum(n), PauliSum(n), PauliSum(n)};
  for (int s = 0; s < n; ++s) {
    PauliSum& block = layout.role(s) == SiteRole::thermometer ? h.thermometer : h.qbm;
    block.add_x(p.gamma[s], s);
    block.add_z(p.bias[s], s);
  }
  for (std::size_t k = 0; k < spec.qbm_edges.size(); ++k) {
    h.qbm += coupling_operator(spec.family, n, spec.qbm_edges[k], p.qbm_weights[k]);
  }
  for (std::size_t k = 0; k < spec.thermometer_edges.size(); ++k) {
    h.thermometer += coupling_operator(spec.family, n, spec.thermometer_edges[k], p.thermometer_weights[k]);
  }
  for (std::size_t k = 0; k < spec.interaction_edges.size(); ++k) {
    h.interaction.add_zz(p.interaction_weights[k], spec.interaction_edges[k].a, spec.interaction_edges[k].b);
  }
  return h;
}

struct Hamiltonian {
  DenseOperator total;
  DenseOperator qbm;
  DenseOperator thermometer;
  DenseOperator interaction;
};

inline Hamiltonian build_hamiltonian(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p) {
  const auto terms = hamiltonian_terms(layout, spec, p);
  return {terms.total().to_dense(), terms.qbm.to_dense(), terms.thermometer.to_dense(), terms.interaction.to_dense()};
}

/// Restriction of an operator to the subspace where the visible units are fixed
/// to `z_visible`. Visible Z factors become the scalars z, terms with an X on a
/// visible site vanish, and terms left with no support form `offset`.
struct ClampedOperator {
  PauliSum reduced;  // acts on layout.unclamped_sites(), in order
  double offset = 0.0;
};

inline ClampedOperator clamp_visible(const PauliSum& op, const SystemLayout& layout, std::span<const int> z_visible) {
  const int n = op.qubits();
  require(n == layout.total(), "clamp_visible: operator and layout sizes differ");
  require(z_visible.size() == static_cast<std::size_t>(layout.n_visible()), "clamp_visible: wrong visible count");
  std::uint32_t visible_mask = 0;
  for (int v = 0; v < layout.n_visible(); ++v) {
    require(z_visible[v] == 1 || z_visible[v] == -1, "clamp_visible: visible values must be +1 or -1");
    visible_mask |= site_bit(n, v);
  }
  const auto free_sites = layout.unclamped_sites();
  const int m = static_cast<int>(free_sites.size());
  ClampedOperator out{PauliSum(m), 0.0};
  for (const auto& t : op.terms()) {
    if (t.x_mask & visible_mask) continue;
    double c = t.coeff;
    for (int v = 0; v < layout.n_visible(); ++v) {
      if (t.z_mask & site_bit(n, v)) c *= z_visible[v];
    }
    std::uint32_t x = 0, z = 0;
    for (int k = 0; k < m; ++k) {
      const std::uint32_t from = site_bit(n, free_sites[k]);
      if (t.x_mask & from) x |= site_bit(m, k);
      if (t.z_mask & from) z |= site_bit(m, k);
    }
    if (x == 0 && z == 0) {
      out.offset += c;
    } else {
      out.reduced.add(c, x, z);
    }
  }
  return out;
}

struct ClampedHamiltonian {
  DenseOperator reduced;
  PauliSum reduced_terms;
  double offset = 0.0;
};

/// Effective Hamiltonian on hidden (+ thermometer) sites for a clamped visible
/// configuration. tr f(H) over the clamped subspace equals f applied to
/// `reduced` shifted by `offset`.
inline ClampedHamiltonian build_clamped_hamiltonian(const SystemLayout& layout, const ModelSpec& spec,
                                                    const QbmParameters& p, std::span<const int> z_visible) {
  auto c = clamp_visible(hamiltonian_terms(layout, spec, p).total(), layout, z_visible);
  return {c.reduced.to_dense(), c.reduced, c.offset};
}

struct InitOptions {
  double gamma_mean = 1.0;
  double gamma_variance = 2.5e-5;
  double hidden_bias_variance = 2.5e-5;
  double weight_variance = 1e-4;
  double interaction_variance = 1.0;
  double probability_clip = 1e-3;
};

/// logit((E[d]+1)/2) with the probability clipped away from 0 and 1.
inline double visible_bias_from_mean(double mean, double clip = 1e-3) {
  const double p = std::clamp((mean + 1.0) / 2.0, clip, 1.0 - clip);
  return std::log(p / (1.0 - p));
}

/// Training initialization. Thermometer biases and weights use the hidden-bias
/// and weight distributions; they are drawn here once and never trained.
inline QbmParameters init_parameters(const SystemLayout& layout, const ModelSpec& spec,
                                     std::span<const double> visible_means, Rng& rng, const InitOptions& opt = {}) {
  require(visible_means.size() == static_cast<std::size_t>(layout.n_visible()),
          "init_parameters: need one data moment per visible unit");
  const int n = layout.total();
  QbmParameters p;
  p.gamma.resize(n);
  p.bias.resize(n);
  for (int s = 0; s < n; ++s) p.gamma[s] = normal_with_variance(rng, opt.gamma_mean, opt.gamma_variance);
  for (int s = 0; s < n; ++s) {
    p.bias[s] = layout.role(s) == SiteRole::visible ? visible_bias_from_mean(visible_means[s], opt.probability_clip)
                                                     : normal_with_variance(rng, 0.0, opt.hidden_bias_variance);
  }
  for (std::size_t k = 0; k < spec.qbm_edges.size(); ++k) {
    p.qbm_weights.push_back(normal_with_variance(rng, 0.0, opt.weight_variance));
  }
  for (std::size_t k = 0; k < spec.thermometer_edges.size(); ++k) {
    p.thermometer_weights.push_back(normal_with_variance(rng, 0.0, opt.weight_variance));
  }
  for (std::size_t k = 0; k < spec.interaction_edges.size(); ++k) {
    p.interaction_weights.push_back(normal_with_variance(rng, 0.0, opt.interaction_variance));
  }
  return p;
}

/// Stand-in for a trained model used by the thermalization diagnostics: QBM
/// biases and weights ~ N(0, 1); fields, thermometer and interaction as in training.
inline QbmParameters diagnostic_parameters(const SystemLayout& layout, const ModelSpec& spec, Rng& rng,
                                           const InitOptions& opt = {}) {
  std::vector<double> zero_means(static_cast<std::size_t>(layout.n_visible()), 0.0);
  QbmParameters p = init_parameters(layout, spec, zero_means, rng, opt);
  for (int s = 0; s < layout.qbm_size(); ++s) p.bias[s] = normal_with_variance(rng, 0.0, 1.0);
  for (auto& w : p.qbm_weights) w = normal_with_variance(rng, 0.0, 1.0);
  return p;
}

}  // namespace ethqbm
