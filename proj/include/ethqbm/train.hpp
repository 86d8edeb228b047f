#pragma once

// Mini-batch training of QBMs (exact Gibbs or quench negative phase) and of
// the RBM baseline, with per-epoch exact metrics and a final sampled report.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ethqbm/adam.hpp"
#include "ethqbm/common.hpp"
#include "ethqbm/eval_data.hpp"
#include "ethqbm/noise.hpp"
#include "ethqbm/qbm_train.hpp"
#include "ethqbm/rbm.hpp"
#include "ethqbm/spin_ops.hpp"
#include "ethqbm/thermal.hpp"

namespace ethqbm {

enum class ModelKind { qbm, rbm };
enum class Backend { exact, quench, quench_noise };

inline std::string_view to_string(ModelKind m) { return m == ModelKind::qbm ? "qbm" : "rbm"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "qbm") return ModelKind::qbm;
  if (s == "rbm") return ModelKind::rbm;
  throw InvalidArgument("unknown model kind: " + std::string(s));
}

inline std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::exact: return "exact";
    case Backend::quench: return "quench";
    case Backend::quench_noise: return "quench_noise";
  }
  return "unknown";
}

inline Backend parse_backend(std::string_view s) {
  if (s == "exact" || s == "exact-gibbs" || s == "exact_gibbs") return Backend::exact;
  if (s == "quench") return Backend::quench;
  if (s == "quench_noise" || s == "quench-noise" || s == "quench+noise") return Backend::quench_noise;
  throw InvalidArgument("unknown backend: " + std::string(s));
}

/// Learning rates tuned per model and family.
inline double default_learning_rate(ModelKind model, Backend backend, ModelFamily family) {
  if (model == ModelKind::rbm) return 1.25e-3;
  if (backend == Backend::exact) {
    switch (family) {
      case ModelFamily::semi_restricted_transverse_ising: return 4e-3;
      case ModelFamily::restricted_transverse_ising: return 2.25e-3;
      case ModelFamily::restricted_xx: return 3e-3;
    }
  }
  switch (family) {
    case ModelFamily::semi_restricted_transverse_ising: return 2e-3;
    case ModelFamily::restricted_transverse_ising: return 2.25e-3;
    case ModelFamily::restricted_xx: return 5e-4;
  }
  return 1e-3;
}

/// nu = 1000 shot noise on every quench observable.
inline NoiseConfig default_training_noise() {
  NoiseConfig n;
  n.shot_noise = true;
  return n;
}

struct TrainConfig {
  ModelKind model = ModelKind::qbm;
  ModelFamily family = ModelFamily::restricted_transverse_ising;
  Backend backend = Backend::exact;
  int n_visible = 4;
  int n_hidden = 1;
  int n_thermometer = 2;
  double learning_rate = 0.0;  // 0 selects the table value
  AdamHyper adam{};            // alpha is overwritten by learning_rate()
  int batch_size = 16;
  int epochs = 40;
  int points_per_epoch = 512;
  int quench_times = 2;     // |T| per mini-batch
  int eval_times = 16;      // times averaged for the quench model table
  int final_samples = 1024;
  double fixed_beta = 1.0;  // exact backend
  DbetaEstimator dbeta = DbetaEstimator::componentwise;  // quench backends only
  NoiseConfig noise = default_training_noise();  // channel flags follow the backend
  InitOptions init{};
  std::uint64_t seed = 0;
  bool record_wall_time = false;
  bool keep_snapshots = true;

  double alpha() const { return learning_rate > 0.0 ? learning_rate : default_learning_rate(model, backend, family); }

  bool uses_quench() const { return model == ModelKind::qbm && backend != Backend::exact; }

  /// Channels on exactly for the noisy backend.
  NoiseConfig effective_noise() const {
    NoiseConfig n = noise;
    n.amplitude_damping = n.dephasing = backend == Backend::quench_noise;
    return n;
  }

  SystemLayout layout() const {
    return {n_visible, model == ModelKind::qbm ? n_hidden : 0,
            model == ModelKind::qbm && backend != Backend::exact ? n_thermometer : 0};
  }

  void validate() const {
    require(n_visible >= 1 && n_hidden >= 0, "TrainConfig: bad unit counts");
    require(batch_size >= 1 && epochs >= 0 && points_per_epoch >= batch_size, "TrainConfig: bad batch/epoch counts");
    require(quench_times >= 1 && eval_times >= 1 && final_samples >= 1, "TrainConfig: counts must be positive");
    require(alpha() > 0.0, "TrainConfig: learning rate must be positive");
    require(std::isfinite(fixed_beta) && fixed_beta > 0.0, "TrainConfig: fixed beta must be positive");
    if (uses_quench()) require(n_thermometer >= 1, "TrainConfig: quench backends need a thermometer");
    noise.validate();
    (void)layout();
  }
};

struct EpochMetrics {
  int epoch = 0;
  double loss_upper = 0.0;
  double loss_exact = 0.0;
  double kl = 0.0;
  double aic = 0.0;
  double beta_therm = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;
  bool kl_floored = false;
};

struct TrainDiagnostics {
  long steps = 0;
  long beta_clamped = 0;       // thermometer energy outside its spectrum
  long beta_failures = 0;      // no beta estimate; step skipped or previous beta reused
  long beta_nonpositive = 0;   // thermometer reports beta <= 0
  long loss_infinite = 0;
  double max_energy_rel_variance = 0.0;
};

/// Everything needed to continue a run from the start of `next_epoch`.
struct TrainCheckpoint {
  int next_epoch = 0;
  QbmParameters qbm;
  RbmParameters rbm;
  AdamState adam;
  PcdState pcd;
  std::string rng_state;
  std::vector<BetaStep> beta_history;
};

struct TrainRun {
  TrainConfig config;
  SystemLayout layout;
  ModelSpec spec;
  std::size_t trainable = 0;
  ProbabilityTable data_table;
  std::vector<std::uint32_t> training_set;
  std::vector<double> eval_times;
  std::vector<EpochMetrics> epochs;  // epoch 0 is the initialization
  std::vector<double> beta_trace;    // one entry per mini-batch
  std::vector<QbmParameters> qbm_snapshots;
  std::vector<RbmParameters> rbm_snapshots;
  QbmParameters qbm_initial, qbm_final, qbm_best;
  RbmParameters rbm_final, rbm_best;
  double min_kl = std::numeric_limits<double>::infinity();  // over trained epochs (>= 1)
  int best_epoch = 0;
  ProbabilityTable final_table;  // exact table of the final model
  double final_kl = 0.0;         // from final_samples draws of the final model
  bool final_kl_floored = false;
  double final_aic = 0.0;
  TrainDiagnostics diagnostics;
  std::vector<std::string> errors;
  bool aborted = false;
  TrainCheckpoint checkpoint;
};

namespace detail {

struct QuenchEvaluation {
  ProbabilityTable table;
  std::optional<double> beta;
  bool clamped = false;
};

/// Visible table and thermometer reading averaged over the evaluation times.
inline QuenchEvaluation evaluate_quench_model(const SystemLayout& layout, const EigenSystem& eig,
                                              const ThermometerProbe& probe, std::span<const double> times,
                                              const NoiseConfig& noise, Rng& rng) {
  const bool channels = noise.channels_enabled();
  const Eigen::VectorXcd coeffs = eigenbasis_coefficients(eig, plus_state(eig.qubits));
  ProbabilityTable acc = ProbabilityTable::Zero(Eigen::Index{1} << layout.n_visible());
  double energy = 0.0;
  for (double t : times) {
    if (channels) {
      const DensityState rho = noisy_quench_state(eig, t, noise, rng);
      acc += visible_marginal(rho.populations(), layout.n_visible(), eig.qubits);
      energy += probe.embedded.expectation(rho.matrix());
    } else {
      const Eigen::VectorXcd psi = evolve_coefficients(eig, coeffs, t);
      acc += visible_marginal(psi.cwiseAbs2(), layout.n_visible(), eig.qubits);
      energy += probe.embedded.expectation(psi);
    }
  }
  QuenchEvaluation out;
  out.table = acc / acc.sum();
  energy /= static_cast<double>(times.size());
  try {
    const auto b = invert_beta_clamped(probe.spectrum, energy);
    out.beta = b.beta;
    out.clamped = b.clamped;
  } catch (const NumericalError&) {
  }
  return out;
}

inline std::string save_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void load_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  require(!is.fail(), "checkpoint: corrupt rng state");
}

}  // namespace detail

/// Train one model on data drawn from `mixture`. All randomness derives from
/// config.seed. Passing an aborted run resumes it from its checkpoint.
inline TrainRun train(const TrainConfig& config, const BernoulliMixture& mixture, const TrainRun* resume = nullptr) {
  config.validate();
  mixture.validate();
  require(mixture.n_visible == config.n_visible, "train: mixture and config disagree on n_visible");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto wall = [&] {
    return config.record_wall_time ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
  };

  const bool is_qbm = config.model == ModelKind::qbm;
  const bool quench = config.uses_quench();
  const NoiseConfig noise = config.effective_noise();

  TrainRun run;
  Rng rng(derive_seed(config.seed, 1));
  Rng eval_rng(derive_seed(config.seed, 2));
  AdamState adam;
  PcdState pcd;
  std::vector<BetaStep> history;
  int first_epoch = 1;

  if (resume != nullptr) {
    require(resume->aborted, "train: can only resume an aborted run");
    run = *resume;
    run.aborted = false;
    run.config = config;
    const auto& cp = resume->checkpoint;
    run.qbm_final = cp.qbm;
    run.rbm_final = cp.rbm;
    adam = cp.adam;
    pcd = cp.pcd;
    history = cp.beta_history;
    detail::load_rng(rng, cp.rng_state);
    first_epoch = cp.next_epoch;
    while (!run.epochs.empty() && run.epochs.back().epoch >= first_epoch) run.epochs.pop_back();
  } else {
    run.config = config;
    run.layout = config.layout();
    run.spec = ModelSpec::standard(run.layout, config.family);
    run.data_table = mixture_table(mixture);
    Rng data_rng(derive_seed(config.seed, 3));
    run.training_set = sample_mixture(mixture, config.points_per_epoch, data_rng);
    const auto means = visible_means(run.data_table, config.n_visible);
    Rng init_rng(derive_seed(config.seed, 4));
    if (is_qbm) {
      run.qbm_initial = run.qbm_final = init_parameters(run.layout, run.spec, means, init_rng, config.init);
      run.trainable = qbm_trainable_count(run.layout, run.spec);
    } else {
      run.rbm_final = init_rbm(config.n_visible, config.n_hidden, means, init_rng, config.init);
      run.trainable = rbm_trainable_count(config.n_visible, config.n_hidden);
      pcd = PcdState::random(config.batch_size, config.n_visible, init_rng);
    }
    AdamHyper h = config.adam;
    h.alpha = config.alpha();
    adam = AdamState(run.trainable, h);
    if (quench) run.eval_times = draw_quench_times(eval_rng, config.eval_times);
  }

  const SystemLayout& layout = run.layout;
  const ModelSpec& spec = run.spec;
  std::optional<ThermometerProbe> probe;
  if (quench) probe = make_thermometer_probe(layout, hamiltonian_terms(layout, spec, run.qbm_final));

  auto measure = [&](int epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    ProbabilityTable table;
    if (!is_qbm) {
      table = rbm_distribution_exact(run.rbm_final);
      m.loss_exact = m.loss_upper = cross_entropy(run.data_table, table).value;
    } else {
      double beta = config.fixed_beta;
      if (quench) {
        const auto terms = hamiltonian_terms(layout, spec, run.qbm_final);
        const EigenSystem eig = eig_hermitian(terms.total().to_dense());
        const auto ev = detail::evaluate_quench_model(layout, eig, *probe, run.eval_times, noise, eval_rng);
        table = ev.table;
        beta = ev.beta.value_or(std::numeric_limits<double>::quiet_NaN());
      } else {
        table = qbm_visible_table(layout, spec, run.qbm_final, beta);
      }
      m.beta_therm = beta;
      if (std::isfinite(beta)) {
        const auto le = loss_exact(layout, spec, run.qbm_final, beta, run.data_table);
        m.loss_exact = le.value;
        if (le.infinite) ++run.diagnostics.loss_infinite;
        m.loss_upper = loss_upper(layout, spec, run.qbm_final, beta, run.data_table);
      } else {
        m.loss_exact = m.loss_upper = std::numeric_limits<double>::quiet_NaN();
      }
    }
    const auto kl = kl_divergence(run.data_table, table);
    m.kl = kl.value;
    m.kl_floored = kl.floored;
    m.aic = aic(cross_entropy(run.data_table, table).value, run.trainable);
    m.wall_time_s = wall();
    run.epochs.push_back(m);
    if (config.keep_snapshots) {
      if (is_qbm) {
        run.qbm_snapshots.push_back(run.qbm_final);
      } else {
        run.rbm_snapshots.push_back(run.rbm_final);
      }
    }
    if (epoch >= 1 && m.kl < run.min_kl) {
      run.min_kl = m.kl;
      run.best_epoch = epoch;
      run.qbm_best = run.qbm_final;
      run.rbm_best = run.rbm_final;
    }
    run.final_table = table;
  };

  auto qbm_step = [&](std::span<const std::uint32_t> batch) {
    const auto data = batch_weights(batch);
    auto theta = trainable_values(layout, run.qbm_final);
    GradientEstimate grad;
    if (!quench) {
      grad = gradient_exact(layout, spec, run.qbm_final, config.fixed_beta, data);
      run.beta_trace.push_back(config.fixed_beta);
    } else {
      const auto terms = hamiltonian_terms(layout, spec, run.qbm_final);
      const PauliSum h_total = terms.total();
      const EigenSystem eig = eig_hermitian(h_total.to_dense());
      std::vector<NamedObservable> observables;
      for (auto& op : trainable_observables(layout, spec, layout.total())) observables.push_back({"", std::move(op)});
      observables.push_back({"H_QBM", terms.qbm});
      const auto times = draw_quench_times(rng, config.quench_times);
      const QuenchEstimate est = quench_sample({&eig, &h_total, &*probe, &noise}, observables, times, &rng);
      run.diagnostics.max_energy_rel_variance =
          std::max(run.diagnostics.max_energy_rel_variance, est.energy_rel_variance);
      if (est.beta_therm_clamped) ++run.diagnostics.beta_clamped;
      double beta;
      if (est.beta_therm) {
        beta = *est.beta_therm;
      } else if (!history.empty()) {
        ++run.diagnostics.beta_failures;
        beta = history.back().beta;
      } else {
        ++run.diagnostics.beta_failures;
        return;
      }
      if (beta <= 0.0) ++run.diagnostics.beta_nonpositive;
      run.beta_trace.push_back(beta);
      history.push_back({beta, std::vector<double>(theta.size(), 0.0)});
      if (history.size() > 2) history.erase(history.begin());

      PhaseStatistics negative;
      for (std::size_t k = 0; k + 1 < est.observables.size(); ++k) negative.observables.push_back(est.observables[k].second);
      negative.energy = est.observables.back().second;
      const QbmBlock block = make_qbm_block(layout, spec, run.qbm_final);
      const auto dbeta = config.dbeta == DbetaEstimator::off ? std::vector<double>{}
                                                             : estimate_dbeta_dtheta(history, theta.size(), config.dbeta);
      grad = assemble_gradient(positive_phase(block, data, beta), negative, beta, dbeta);
    }
    const auto delta = adam_step(adam, theta, grad.total);
    if (quench) history.back().delta = delta;
    set_trainable_values(layout, run.qbm_final, theta);
    ++run.diagnostics.steps;
  };

  if (first_epoch == 1) measure(0);
  const int batches = config.points_per_epoch / config.batch_size;
  std::vector<std::size_t> order(run.training_set.size());
  for (int epoch = first_epoch; epoch <= config.epochs; ++epoch) {
    run.checkpoint = {epoch, run.qbm_final, run.rbm_final, adam, pcd, detail::save_rng(rng), history};
    try {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::uint32_t> batch(static_cast<std::size_t>(config.batch_size));
      for (int b = 0; b < batches; ++b) {
        for (int k = 0; k < config.batch_size; ++k) batch[k] = run.training_set[order[b * config.batch_size + k]];
        if (is_qbm) {
          qbm_step(batch);
        } else {
          std::vector<std::vector<int>> spins;
          for (auto u : batch) spins.push_back(visible_spins(u, config.n_visible));
          pcd_update(run.rbm_final, spins, pcd, adam, rng);
          ++run.diagnostics.steps;
        }
      }
      measure(epoch);
    } catch (const std::exception& e) {
      run.errors.push_back("epoch " + std::to_string(epoch) + ": " + e.what());
      run.aborted = true;
      run.qbm_final = run.checkpoint.qbm;
      run.rbm_final = run.checkpoint.rbm;
      return run;
    }
  }
  run.checkpoint = {config.epochs + 1, run.qbm_final, run.rbm_final, adam, pcd, detail::save_rng(rng), history};

  const ProbabilityTable sampled = resample_table(run.final_table, config.final_samples, eval_rng);
  const auto kl = kl_divergence(run.data_table, sampled);
  run.final_kl = kl.value;
  run.final_kl_floored = kl.floored;
  run.final_aic = aic(cross_entropy(run.data_table, sampled).value, run.trainable);
  return run;
}

}  // namespace ethqbm
