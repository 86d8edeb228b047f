#pragma once

// Experiment orchestration: seeded instances, sweeps over system size, field
// strength, sample count and coherence time, per-instance metric rows and
// mean / standard-error aggregates written as CSV.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/eval_data.hpp"
#include "ethqbm/io.hpp"
#include "ethqbm/qbm_train.hpp"
#include "ethqbm/spectral.hpp"
#include "ethqbm/spin_ops.hpp"
#include "ethqbm/thermal.hpp"
#include "ethqbm/train.hpp"

namespace ethqbm {

enum class ExperimentKind {
  level_stats,
  quench_accuracy_vs_size,
  quench_accuracy_vs_time,
  train_kl,
  train_aic,
  kl_ratio,
  noise_sweep,
};

inline constexpr ExperimentKind kAllExperimentKinds[] = {
    ExperimentKind::level_stats,   ExperimentKind::quench_accuracy_vs_size, ExperimentKind::quench_accuracy_vs_time,
    ExperimentKind::train_kl,      ExperimentKind::train_aic,               ExperimentKind::kl_ratio,
    ExperimentKind::noise_sweep,
};

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::level_stats: return "level-stats";
    case ExperimentKind::quench_accuracy_vs_size: return "quench-accuracy-vs-size";
    case ExperimentKind::quench_accuracy_vs_time: return "quench-accuracy-vs-time";
    case ExperimentKind::train_kl: return "train-kl";
    case ExperimentKind::train_aic: return "train-aic";
    case ExperimentKind::kl_ratio: return "kl-ratio";
    case ExperimentKind::noise_sweep: return "noise-sweep";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  for (auto k : kAllExperimentKinds) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown experiment kind: " + std::string(s));
}

/// A trained-model series: "rbm" or "qbm_<backend>".
struct SeriesSpec {
  ModelKind model = ModelKind::qbm;
  Backend backend = Backend::exact;

  std::string name() const { return model == ModelKind::rbm ? "rbm" : "qbm_" + std::string(to_string(backend)); }

  friend bool operator==(const SeriesSpec&, const SeriesSpec&) = default;
};

inline SeriesSpec parse_series(std::string_view s) {
  if (s == "rbm") return {ModelKind::rbm, Backend::exact};
  require(s.starts_with("qbm_"), "unknown series: " + std::string(s));
  return {ModelKind::qbm, parse_backend(s.substr(4))};
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::train_kl;
  ModelFamily family = ModelFamily::restricted_transverse_ising;
  std::vector<int> n_visible{6};
  int n_hidden = 1;
  int n_thermometer = 2;
  int instances = 5;
  std::uint64_t seed = 1;
  int threads = 1;

  // data
  int mixture_modes = 8;
  double mixture_fidelity = 0.9;

  // level-stats: mean field over the interaction scale
  std::vector<double> gamma_ratios{0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0};
  double bulk_fraction = 0.5;
  // quench accuracy
  int quench_times = 16;
  std::vector<int> time_counts{1, 2, 4, 8, 16, 32};
  // training kinds
  std::vector<std::string> series{"rbm", "qbm_exact", "qbm_quench"};
  // noise-sweep: T1 = T_phi values, plus noiseless reference series
  std::vector<double> coherence_times{5.0, 10.0, 25.0, 50.0, 75.0, 150.0};
  std::vector<std::string> references{"rbm", "qbm_exact", "qbm_quench"};

  TrainConfig train{};  // template; model, backend, n_visible, seed and noise times are set per job
  bool save_runs = true;

  SystemLayout layout(int nv) const { return {nv, n_hidden, n_thermometer}; }

  void validate() const {
    require(!n_visible.empty(), "experiment: empty n_visible list");
    for (int nv : n_visible) (void)layout(nv);
    require(instances >= 1, "experiment: need at least one instance");
    require(threads >= 1, "experiment: need at least one thread");
    require(mixture_modes >= 1 && mixture_fidelity > 0.0 && mixture_fidelity <= 1.0, "experiment: bad mixture");
    require(quench_times >= 1, "experiment: quench_times must be positive");
    require(bulk_fraction > 0.0 && bulk_fraction <= 1.0, "experiment: bulk_fraction must be in (0, 1]");
    for (double r : gamma_ratios) require(r >= 0.0 && std::isfinite(r), "experiment: gamma ratios must be >= 0");
    for (int c : time_counts) require(c >= 1, "experiment: time counts must be positive");
    for (double t : coherence_times) require(t > 0.0, "experiment: coherence times must be positive");
    for (const auto& s : series) (void)parse_series(s);
    for (const auto& s : references) (void)parse_series(s);
    if (kind == ExperimentKind::level_stats || kind == ExperimentKind::quench_accuracy_vs_size ||
        kind == ExperimentKind::quench_accuracy_vs_time) {
      require(n_thermometer >= 1, "experiment: diagnostics need a thermometer");
    }
    train.validate();
  }
};

inline Json to_json(const ExperimentConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"family", std::string(to_string(c.family))},
          {"n_visible", c.n_visible},
          {"n_hidden", c.n_hidden},
          {"n_thermometer", c.n_thermometer},
          {"instances", c.instances},
          {"seed", c.seed},
          {"threads", c.threads},
          {"mixture", {{"modes", c.mixture_modes}, {"fidelity", c.mixture_fidelity}}},
          {"gamma_ratios", c.gamma_ratios},
          {"bulk_fraction", c.bulk_fraction},
          {"quench_times", c.quench_times},
          {"time_counts", c.time_counts},
          {"series", c.series},
          {"coherence_times", c.coherence_times},
          {"references", c.references},
          {"train", to_json(c.train)},
          {"save_runs", c.save_runs}};
}

/// Missing keys keep the values of `c`.
inline ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig c = {}) {
  if (j.contains("kind")) c.kind = parse_experiment_kind(j.at("kind").get<std::string>());
  if (j.contains("family")) c.family = parse_model_family(j.at("family").get<std::string>());
  if (j.contains("n_visible")) {
    const auto& v = j.at("n_visible");
    c.n_visible = v.is_array() ? v.get<std::vector<int>>() : std::vector<int>{v.get<int>()};
  }
  c.n_hidden = j.value("n_hidden", c.n_hidden);
  c.n_thermometer = j.value("n_thermometer", c.n_thermometer);
  c.instances = j.value("instances", c.instances);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (j.contains("mixture")) {
    c.mixture_modes = j.at("mixture").value("modes", c.mixture_modes);
    c.mixture_fidelity = j.at("mixture").value("fidelity", c.mixture_fidelity);
  }
  if (j.contains("gamma_ratios")) c.gamma_ratios = j.at("gamma_ratios").get<std::vector<double>>();
  c.bulk_fraction = j.value("bulk_fraction", c.bulk_fraction);
  c.quench_times = j.value("quench_times", c.quench_times);
  if (j.contains("time_counts")) c.time_counts = j.at("time_counts").get<std::vector<int>>();
  if (j.contains("series")) c.series = j.at("series").get<std::vector<std::string>>();
  if (j.contains("coherence_times")) c.coherence_times = j.at("coherence_times").get<std::vector<double>>();
  if (j.contains("references")) c.references = j.at("references").get<std::vector<std::string>>();
  TrainConfig t = c.train;
  t.family = c.family;
  t.n_hidden = c.n_hidden;
  t.n_thermometer = c.n_thermometer;
  c.train = j.contains("train") ? train_config_from_json(j.at("train"), t) : t;
  c.save_runs = j.value("save_runs", c.save_runs);
  c.validate();
  return c;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the canonical config echo. Thread count does not affect results and is left out.
inline std::string config_hash(const ExperimentConfig& c) {
  Json j = to_json(c);
  j.erase("threads");
  return fnv1a_hex(j.dump());
}

// ---- instances ----------------------------------------------------------------

/// Everything random about one (n_v, instance) pair. Training series at the
/// same pair share data and seeds, so their metrics are directly comparable.
struct Instance {
  int n_visible = 0;
  int index = 0;
  SystemLayout layout;
  ModelSpec spec;
  BernoulliMixture mixture;
  QbmParameters diagnostic;  // QBM biases and weights ~ N(0, 1)
  std::uint64_t train_seed = 0;
  std::uint64_t time_seed = 0;
};

inline Instance make_instance(const ExperimentConfig& c, int nv, int index) {
  Instance inst;
  inst.n_visible = nv;
  inst.index = index;
  inst.layout = c.layout(nv);
  inst.spec = ModelSpec::standard(inst.layout, c.family);
  const auto k = static_cast<std::uint64_t>(index);
  const auto v = static_cast<std::uint64_t>(nv);
  Rng data_rng(derive_seed(c.seed, 100 + v, k));
  inst.mixture = random_mixture(nv, c.mixture_modes, c.mixture_fidelity, data_rng);
  Rng param_rng(derive_seed(c.seed, 200 + v, k));
  inst.diagnostic = diagnostic_parameters(inst.layout, inst.spec, param_rng, c.train.init);
  inst.train_seed = derive_seed(c.seed, 300 + v, k);
  inst.time_seed = derive_seed(c.seed, 400 + v, k);
  return inst;
}

/// All (n_v, instance) pairs in config order.
inline std::vector<Instance> seed_instances(const ExperimentConfig& c) {
  std::vector<Instance> out;
  for (int nv : c.n_visible) {
    for (int i = 0; i < c.instances; ++i) out.push_back(make_instance(c, nv, i));
  }
  return out;
}

// ---- statistics ------------------------------------------------------------------

struct MeanSe {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};

/// Mean and sample standard error of the finite entries.
inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  double sum = 0.0;
  for (double x : xs) {
    if (!std::isfinite(x)) continue;
    sum += x;
    ++out.count;
  }
  if (out.count == 0) return out;
  out.mean = sum / static_cast<double>(out.count);
  if (out.count == 1) return out;
  double ss = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) ss += (x - out.mean) * (x - out.mean);
  }
  out.se = std::sqrt(ss / static_cast<double>(out.count - 1) / static_cast<double>(out.count));
  return out;
}

inline double median(std::vector<double> xs) {
  require(!xs.empty(), "median: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

struct KlRatio {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

/// (KL_quench - KL_exact) / (KL_rbm - KL_exact); undefined when |denominator| < 1e-9.
inline KlRatio kl_ratio(double kl_quench, double kl_exact, double kl_rbm) {
  const double den = kl_rbm - kl_exact;
  if (!std::isfinite(den) || std::abs(den) < 1e-9 || !std::isfinite(kl_quench)) return {};
  return {(kl_quench - kl_exact) / den, true};
}

// ---- diagnostics -----------------------------------------------------------------

/// Level-spacing fit of the full QBM/thermometer Hamiltonian with every
/// transverse field shifted so the mean field is `gamma_mean`.
/// Only the central `bulk_fraction` of the levels is used: the sparse spectral
/// edges otherwise dominate the median-normalized histogram.
struct LevelStatistics {
  SpacingSample sample;
  BerryRobnikFit fit;
  std::size_t levels = 0;  // eigenvalues inside the window
};

inline LevelStatistics level_statistics(const Instance& inst, double gamma_mean, double gamma_reference = 1.0,
                                        double bulk_fraction = 0.5) {
  require(bulk_fraction > 0.0 && bulk_fraction <= 1.0, "level_statistics: bulk fraction must be in (0, 1]");
  QbmParameters p = inst.diagnostic;
  for (auto& g : p.gamma) g += gamma_mean - gamma_reference;
  const auto h = build_hamiltonian(inst.layout, inst.spec, p);
  const EigenSystem eig = eig_hermitian(h.total);
  const auto n = static_cast<std::size_t>(eig.values.size());
  const auto keep = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(bulk_fraction * n)));
  const std::size_t lo = (n - keep) / 2;
  LevelStatistics out;
  out.sample = level_spacings(std::span<const double>(eig.values.data() + lo, keep));
  out.fit = fit_berry_robnik(out.sample);
  out.levels = keep;
  return out;
}

/// Normalized errors |quench - Gibbs| / 2 of every gradient observable, against
/// the full Gibbs state at beta(<H>_init) and against the QBM Gibbs state at
/// the thermometer's beta.
struct QuenchAccuracy {
  std::vector<double> error_init;
  std::vector<double> error_therm;
  double beta_init = std::numeric_limits<double>::quiet_NaN();
  double beta_therm = std::numeric_limits<double>::quiet_NaN();
};

inline QuenchAccuracy quench_accuracy(const SystemLayout& layout, const ModelSpec& spec, const QbmParameters& p,
                                      std::span<const double> times, const NoiseConfig* noise = nullptr,
                                      Rng* rng = nullptr) {
  const auto terms = hamiltonian_terms(layout, spec, p);
  const PauliSum h = terms.total();
  const EigenSystem eig = eig_hermitian(h.to_dense());
  const ThermometerProbe probe = make_thermometer_probe(layout, terms);
  std::vector<NamedObservable> obs;
  for (auto& op : trainable_observables(layout, spec, layout.total())) obs.push_back({op.label(), std::move(op)});
  const QuenchEstimate est = quench_sample({&eig, &h, &probe, noise}, obs, times, rng);

  QuenchAccuracy out;
  if (est.beta_full) {
    out.beta_init = *est.beta_full;
    const GibbsEnsemble g = gibbs_ensemble(eig, out.beta_init);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const double exact = g.probabilities.dot(eigenstate_expectations(obs[k].op, eig));
      out.error_init.push_back(std::abs(est.observables[k].second - exact) / 2.0);
    }
  }
  if (est.beta_therm) {
    out.beta_therm = *est.beta_therm;
    const QbmBlock block = make_qbm_block(layout, spec, p);
    const EigenSystem qe = eig_hermitian(block.hamiltonian.to_dense());
    const PhaseStatistics neg = exact_negative_phase(block, qe, out.beta_therm);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      out.error_therm.push_back(std::abs(est.observables[k].second - neg.observables[k]) / 2.0);
    }
  }
  return out;
}

inline QuenchAccuracy quench_accuracy(const Instance& inst, int time_count) {
  Rng rng(inst.time_seed);
  const auto times = draw_quench_times(rng, time_count);
  return quench_accuracy(inst.layout, inst.spec, inst.diagnostic, times);
}

// ---- records -------------------------------------------------------------------

/// One per-instance measurement. `x` is the sweep coordinate; infinite x
/// marks a noiseless reference in the noise sweep.
struct MetricRow {
  std::string series;
  int n_visible = 0;
  double x = 0.0;
  int instance = 0;
  std::string metric;
  double value = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct PlotRow {
  double x = 0.0;
  double y = 0.0;
  double yerr = 0.0;
  std::string series;

  friend bool operator==(const PlotRow&, const PlotRow&) = default;
};

struct RunRecord {
  ExperimentConfig config;
  std::string config_hash;
  std::string plot_metric;
  std::vector<MetricRow> rows;
  std::vector<PlotRow> plot;
  std::vector<TrainRun> runs;  // training kinds only, job order
  std::vector<std::string> run_names;
  std::vector<std::pair<std::string, std::string>> files;  // extra outputs: relative path, contents
};

inline constexpr std::string_view kMetricRowsHeader = "series,n_visible,x,instance,metric,value,status";
inline constexpr std::string_view kPlotHeader = "x,y,yerr,series";

/// Keeps error text CSV-safe.
inline std::string csv_safe(std::string s) {
  for (auto& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

inline std::string metric_rows_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kMetricRowsHeader) + "\n";
  for (const auto& r : rows) {
    out += csv_safe(r.series) + "," + std::to_string(r.n_visible) + "," + format_double(r.x) + "," +
           std::to_string(r.instance) + "," + csv_safe(r.metric) + "," + format_double(r.value) + "," +
           csv_safe(r.status) + "\n";
  }
  return out;
}

inline std::vector<MetricRow> parse_metric_rows_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kMetricRowsHeader, "metrics.csv: bad header");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    require(c.size() == 7, "metrics.csv: expected 7 columns");
    rows.push_back({c[0], std::stoi(c[1]), parse_double(c[2]), std::stoi(c[3]), c[4], parse_double(c[5]), c[6]});
  }
  return rows;
}

inline std::string plot_csv(const std::vector<PlotRow>& rows) {
  std::string out = std::string(kPlotHeader) + "\n";
  for (const auto& r : rows) {
    out += format_double(r.x) + "," + format_double(r.y) + "," + format_double(r.yerr) + "," + csv_safe(r.series) + "\n";
  }
  return out;
}

inline std::vector<PlotRow> parse_plot_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kPlotHeader, "plotdata.csv: bad header");
  std::vector<PlotRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    require(c.size() == 4, "plotdata.csv: expected 4 columns");
    rows.push_back({parse_double(c[0]), parse_double(c[1]), parse_double(c[2]), c[3]});
  }
  return rows;
}

/// Plot label: the series, suffixed with n_v unless x already is n_v.
inline std::string plot_series_name(const std::string& series, int nv, bool x_is_nv) {
  return x_is_nv ? series : series + "/n_v=" + std::to_string(nv);
}

/// Mean and standard error of `metric` over instances for every (series, n_v, x),
/// in first-appearance order. Rows whose status is not "ok" are skipped.
inline std::vector<PlotRow> aggregate(const std::vector<MetricRow>& rows, std::string_view metric, bool x_is_nv) {
  using Key = std::tuple<std::string, int, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  for (const auto& r : rows) {
    if (r.metric != metric) continue;
    const Key key{r.series, r.n_visible, r.x};
    if (!values.contains(key)) order.push_back(key);
    auto& v = values[key];
    if (r.status == "ok") v.push_back(r.value);
  }
  std::vector<PlotRow> out;
  for (const auto& key : order) {
    const auto s = mean_se(values[key]);
    out.push_back({std::get<2>(key), s.mean, s.se, plot_series_name(std::get<0>(key), std::get<1>(key), x_is_nv)});
  }
  return out;
}

// ---- execution -------------------------------------------------------------------

/// Runs fn(0..count-1) on up to `threads` workers. Each index writes only its
/// own result slot, so output order never depends on scheduling.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

namespace detail {

inline std::string error_status(const std::exception& e) { return std::string("error: ") + e.what(); }

inline std::vector<MetricRow> run_level_stats(const ExperimentConfig& c, const std::vector<Instance>& instances,
                                              RunRecord& record) {
  const double scale = std::sqrt(c.train.init.interaction_variance);
  const std::size_t nr = c.gamma_ratios.size();
  std::vector<std::vector<MetricRow>> slots(instances.size() * nr);
  std::vector<std::vector<std::pair<std::string, std::string>>> files(slots.size());
  parallel_for(slots.size(), c.threads, [&](std::size_t job) {
    const Instance& inst = instances[job / nr];
    const double ratio = c.gamma_ratios[job % nr];
    MetricRow base{"rho", inst.n_visible, ratio, inst.index, "rho"};
    try {
      const auto ls = level_statistics(inst, ratio * scale, c.train.init.gamma_mean, c.bulk_fraction);
      MetricRow ks = base;
      base.value = ls.fit.rho;
      ks.metric = "ks";
      ks.value = ls.fit.ks_statistic;
      slots[job] = {base, ks};
      if (inst.index == 0) {
        const std::string stem = "spacings/nv" + std::to_string(inst.n_visible) + "_ratio" + format_double(ratio);
        files[job] = {{stem + ".csv", spacing_histogram_csv(spacing_histogram(ls.sample, ls.fit))},
                      {stem + ".json", spacing_fit_json(ls.fit, ls.levels, ls.sample.normalization).dump(2) + "\n"}};
      }
    } catch (const std::exception& e) {
      base.status = error_status(e);
      slots[job] = {base};
    }
  });
  std::vector<MetricRow> rows;
  // group by n_v and ratio, instances innermost
  for (std::size_t v = 0; v < c.n_visible.size(); ++v) {
    for (std::size_t r = 0; r < nr; ++r) {
      for (int i = 0; i < c.instances; ++i) {
        const auto& s = slots[(v * c.instances + i) * nr + r];
        rows.insert(rows.end(), s.begin(), s.end());
      }
    }
  }
  for (auto& f : files) record.files.insert(record.files.end(), f.begin(), f.end());
  return rows;
}

inline std::vector<MetricRow> accuracy_rows(const Instance& inst, double x, int time_count) {
  MetricRow a{"beta_init", inst.n_visible, x, inst.index, "median_error"};
  MetricRow b{"beta_therm", inst.n_visible, x, inst.index, "median_error"};
  try {
    const auto acc = quench_accuracy(inst, time_count);
    if (acc.error_init.empty()) {
      a.status = "error: beta(<H>_init) undefined";
    } else {
      a.value = median(acc.error_init);
    }
    if (acc.error_therm.empty()) {
      b.status = "error: thermometer beta undefined";
    } else {
      b.value = median(acc.error_therm);
    }
  } catch (const std::exception& e) {
    a.status = b.status = error_status(e);
  }
  return {a, b};
}

inline std::vector<MetricRow> run_accuracy_vs_size(const ExperimentConfig& c, const std::vector<Instance>& instances) {
  std::vector<std::vector<MetricRow>> slots(instances.size());
  parallel_for(slots.size(), c.threads, [&](std::size_t job) {
    slots[job] = accuracy_rows(instances[job], instances[job].n_visible, c.quench_times);
  });
  std::vector<MetricRow> rows;
  for (const auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

inline std::vector<MetricRow> run_accuracy_vs_time(const ExperimentConfig& c, const std::vector<Instance>& instances) {
  const std::size_t nt = c.time_counts.size();
  std::vector<std::vector<MetricRow>> slots(instances.size() * nt);
  parallel_for(slots.size(), c.threads, [&](std::size_t job) {
    const int count = c.time_counts[job % nt];
    slots[job] = accuracy_rows(instances[job / nt], count, count);
  });
  std::vector<MetricRow> rows;
  for (std::size_t v = 0; v < c.n_visible.size(); ++v) {
    for (std::size_t t = 0; t < nt; ++t) {
      for (int i = 0; i < c.instances; ++i) {
        const auto& s = slots[(v * c.instances + i) * nt + t];
        rows.insert(rows.end(), s.begin(), s.end());
      }
    }
  }
  return rows;
}

struct TrainJob {
  SeriesSpec series;
  std::size_t instance = 0;  // index into the instance list
  double x = 0.0;
  std::optional<double> coherence_time;
};

inline TrainConfig job_config(const ExperimentConfig& c, const Instance& inst, const TrainJob& job) {
  TrainConfig t = c.train;
  t.model = job.series.model;
  t.backend = job.series.backend;
  t.family = c.family;
  t.n_visible = inst.n_visible;
  t.n_hidden = c.n_hidden;
  t.n_thermometer = c.n_thermometer;
  t.seed = inst.train_seed;
  if (job.coherence_time) t.noise.t1 = t.noise.t_phi = *job.coherence_time;
  return t;
}

inline std::string run_name(const TrainJob& job, const Instance& inst) {
  std::string name = job.series.name() + "_nv" + std::to_string(inst.n_visible) + "_i" + std::to_string(inst.index);
  if (job.coherence_time) name += "_t" + format_double(*job.coherence_time);
  return name;
}

inline std::vector<MetricRow> train_rows(const TrainJob& job, const Instance& inst, const TrainRun& run) {
  const std::string series = job.series.name();
  std::vector<MetricRow> rows;
  auto add = [&](const std::string& metric, double value) {
    MetricRow r{series, inst.n_visible, job.x, inst.index, metric, value};
    if (run.aborted) r.status = "error: " + (run.errors.empty() ? std::string("aborted") : run.errors.back());
    rows.push_back(r);
  };
  add("min_kl", run.min_kl);
  add("final_kl", run.final_kl);
  add("aic", run.best_epoch > 0 ? run.epochs[static_cast<std::size_t>(run.best_epoch)].aic
                                : std::numeric_limits<double>::quiet_NaN());
  add("final_aic", run.final_aic);
  return rows;
}

inline void run_training(const ExperimentConfig& c, const std::vector<Instance>& instances,
                         const std::vector<TrainJob>& jobs, RunRecord& record) {
  std::vector<TrainRun> runs(jobs.size());
  parallel_for(jobs.size(), c.threads, [&](std::size_t k) {
    const Instance& inst = instances[jobs[k].instance];
    const TrainConfig t = job_config(c, inst, jobs[k]);
    try {
      runs[k] = train(t, inst.mixture);
    } catch (const std::exception& e) {
      runs[k].config = t;
      runs[k].aborted = true;
      runs[k].errors.push_back(e.what());
    }
  });
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const Instance& inst = instances[jobs[k].instance];
    const auto rows = train_rows(jobs[k], inst, runs[k]);
    record.rows.insert(record.rows.end(), rows.begin(), rows.end());
    record.run_names.push_back(run_name(jobs[k], inst));
  }
  record.runs = std::move(runs);
}

/// Per-instance KL ratios from the min_kl rows of the three series.
inline std::vector<MetricRow> kl_ratio_rows(const std::vector<MetricRow>& rows, const std::string& quench_series) {
  std::map<std::tuple<std::string, int, int>, const MetricRow*> kl;
  std::vector<std::pair<int, int>> order;
  for (const auto& r : rows) {
    if (r.metric != "min_kl") continue;
    kl[{r.series, r.n_visible, r.instance}] = &r;
    if (r.series == quench_series) order.emplace_back(r.n_visible, r.instance);
  }
  std::vector<MetricRow> out;
  for (auto [nv, i] : order) {
    MetricRow r{"kl_ratio", nv, static_cast<double>(nv), i, "kl_ratio"};
    const auto* q = kl[{quench_series, nv, i}];
    const auto* e = kl[{"qbm_exact", nv, i}];
    const auto* b = kl[{"rbm", nv, i}];
    if (!q || !e || !b || q->status != "ok" || e->status != "ok" || b->status != "ok") {
      r.status = "error: missing or failed input run";
    } else {
      const auto ratio = kl_ratio(q->value, e->value, b->value);
      r.value = ratio.value;
      if (!ratio.defined) r.status = "undefined";
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

/// Run one experiment and return its rows and aggregates; nothing is written.
inline RunRecord run_experiment(const ExperimentConfig& config) {
  config.validate();
  RunRecord record;
  record.config = config;
  record.config_hash = config_hash(config);
  const auto instances = seed_instances(config);

  bool x_is_nv = false;
  switch (config.kind) {
    case ExperimentKind::level_stats:
      record.rows = detail::run_level_stats(config, instances, record);
      record.plot_metric = "rho";
      break;
    case ExperimentKind::quench_accuracy_vs_size:
      record.rows = detail::run_accuracy_vs_size(config, instances);
      record.plot_metric = "median_error";
      x_is_nv = true;
      break;
    case ExperimentKind::quench_accuracy_vs_time:
      record.rows = detail::run_accuracy_vs_time(config, instances);
      record.plot_metric = "median_error";
      break;
    case ExperimentKind::train_kl:
    case ExperimentKind::train_aic:
    case ExperimentKind::kl_ratio: {
      std::vector<SeriesSpec> series;
      for (const auto& s : config.series) series.push_back(parse_series(s));
      if (config.kind == ExperimentKind::kl_ratio) {
        for (auto need : {SeriesSpec{ModelKind::rbm, Backend::exact}, SeriesSpec{ModelKind::qbm, Backend::exact}}) {
          if (std::find(series.begin(), series.end(), need) == series.end()) series.push_back(need);
        }
      }
      std::vector<detail::TrainJob> jobs;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        for (const auto& s : series) jobs.push_back({s, i, static_cast<double>(instances[i].n_visible), std::nullopt});
      }
      detail::run_training(config, instances, jobs, record);
      x_is_nv = true;
      record.plot_metric = config.kind == ExperimentKind::train_aic ? "aic" : "min_kl";
      if (config.kind == ExperimentKind::kl_ratio) {
        std::vector<MetricRow> ratios;
        for (const auto& s : series) {
          if (s.model != ModelKind::qbm || s.backend == Backend::exact) continue;
          auto r = detail::kl_ratio_rows(record.rows, s.name());
          for (auto& row : r) row.series = "kl_ratio:" + s.name();
          ratios.insert(ratios.end(), r.begin(), r.end());
        }
        record.rows.insert(record.rows.end(), ratios.begin(), ratios.end());
        record.plot_metric = "kl_ratio";
      }
      break;
    }
    case ExperimentKind::noise_sweep: {
      std::vector<detail::TrainJob> jobs;
      const double inf = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < instances.size(); ++i) {
        for (double t : config.coherence_times) {
          jobs.push_back({{ModelKind::qbm, Backend::quench_noise}, i, t, t});
        }
        for (const auto& s : config.references) jobs.push_back({parse_series(s), i, inf, std::nullopt});
      }
      detail::run_training(config, instances, jobs, record);
      record.plot_metric = "min_kl";
      break;
    }
  }
  record.plot = aggregate(record.rows, record.plot_metric, x_is_nv);
  return record;
}

/// metrics.csv, plotdata.csv and config.json (echo plus hash); training kinds
/// also get one run directory per job under runs/ when save_runs is set.
inline void write_run_record(const RunRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.csv", metric_rows_csv(record.rows));
  write_text(dir / "plotdata.csv", plot_csv(record.plot));
  Json echo = to_json(record.config);
  echo["config_hash"] = record.config_hash;
  echo["plot_metric"] = record.plot_metric;
  write_text(dir / "config.json", echo.dump(2) + "\n");
  for (const auto& [path, text] : record.files) {
    std::filesystem::create_directories((dir / path).parent_path());
    write_text(dir / path, text);
  }
  if (record.config.save_runs) {
    for (std::size_t k = 0; k < record.runs.size(); ++k) {
      if (!record.runs[k].aborted || !record.runs[k].epochs.empty()) {
        write_train_run(record.runs[k], dir / "runs" / record.run_names[k]);
      }
    }
  }
}

}  // namespace ethqbm
