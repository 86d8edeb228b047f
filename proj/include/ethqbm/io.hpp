#pragma once

// JSON and CSV persistence for models, configs, quench estimates and runs.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ethqbm/common.hpp"
#include "ethqbm/eval_data.hpp"
#include "ethqbm/rbm.hpp"
#include "ethqbm/spin_ops.hpp"
#include "ethqbm/thermal.hpp"
#include "ethqbm/train.hpp"

namespace ethqbm {

using Json = nlohmann::ordered_json;

/// Round-trip exact decimal form; non-finite values become nan/inf.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  require(used == s.size(), "parse_double: trailing characters in '" + s + "'");
  return v;
}

/// JSON has no NaN; store non-finite numbers as null.
inline Json json_number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double number_from_json(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open " + path.string() + " for writing");
  os << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---- models ---------------------------------------------------------------

inline Json edges_to_json(const std::vector<Edge>& edges) {
  Json a = Json::array();
  for (const auto& e : edges) a.push_back({e.a, e.b});
  return a;
}

inline std::vector<Edge> edges_from_json(const Json& j) {
  std::vector<Edge> out;
  for (const auto& e : j) {
    require(e.is_array() && e.size() == 2, "model json: edges must be [a, b] pairs");
    out.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return out;
}

inline Json weights_to_json(const std::vector<Edge>& edges, const std::vector<double>& w) {
  Json o = Json::object();
  for (std::size_t k = 0; k < edges.size(); ++k) o[edge_key(edges[k])] = w[k];
  return o;
}

inline std::vector<double> weights_from_json(const std::vector<Edge>& edges, const Json& j) {
  require(j.is_object() && j.size() == edges.size(), "model json: weight map does not match the edge list");
  std::vector<double> w;
  for (const auto& e : edges) {
    require(j.contains(edge_key(e)), "model json: missing weight for edge " + edge_key(e));
    w.push_back(j.at(edge_key(e)).get<double>());
  }
  return w;
}

struct QbmModel {
  SystemLayout layout;
  ModelSpec spec;
  QbmParameters params;
  std::uint64_t seed = 0;
};

inline Json to_json(const QbmModel& m) {
  Json j;
  j["layout"] = {{"n_visible", m.layout.n_visible()},
                 {"n_hidden", m.layout.n_hidden()},
                 {"n_thermometer", m.layout.n_thermometer()}};
  j["family"] = std::string(to_string(m.spec.family));
  j["edges"] = {{"qbm", edges_to_json(m.spec.qbm_edges)},
                {"thermometer", edges_to_json(m.spec.thermometer_edges)},
                {"interaction", edges_to_json(m.spec.interaction_edges)}};
  j["gamma"] = m.params.gamma;
  j["bias"] = m.params.bias;
  j["weights"] = weights_to_json(m.spec.qbm_edges, m.params.qbm_weights);
  j["thermometer_weights"] = weights_to_json(m.spec.thermometer_edges, m.params.thermometer_weights);
  j["interaction"] = weights_to_json(m.spec.interaction_edges, m.params.interaction_weights);
  j["seed"] = m.seed;
  return j;
}

inline QbmModel qbm_model_from_json(const Json& j) {
  QbmModel m;
  const auto& l = j.at("layout");
  m.layout = SystemLayout(l.at("n_visible").get<int>(), l.at("n_hidden").get<int>(), l.at("n_thermometer").get<int>());
  m.spec.family = parse_model_family(j.at("family").get<std::string>());
  m.spec.qbm_edges = edges_from_json(j.at("edges").at("qbm"));
  m.spec.thermometer_edges = edges_from_json(j.at("edges").at("thermometer"));
  m.spec.interaction_edges = edges_from_json(j.at("edges").at("interaction"));
  m.params.gamma = j.at("gamma").get<std::vector<double>>();
  m.params.bias = j.at("bias").get<std::vector<double>>();
  m.params.qbm_weights = weights_from_json(m.spec.qbm_edges, j.at("weights"));
  m.params.thermometer_weights = weights_from_json(m.spec.thermometer_edges, j.at("thermometer_weights"));
  m.params.interaction_weights = weights_from_json(m.spec.interaction_edges, j.at("interaction"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.spec.validate(m.layout);
  m.params.validate(m.layout, m.spec);
  return m;
}

inline Json to_json(const RbmParameters& p) {
  return {{"family", "rbm"},
          {"n_visible", p.n_visible},
          {"n_hidden", p.n_hidden},
          {"visible_bias", p.visible_bias},
          {"hidden_bias", p.hidden_bias},
          {"weights", p.weights}};
}

inline RbmParameters rbm_from_json(const Json& j) {
  RbmParameters p(j.at("n_visible").get<int>(), j.at("n_hidden").get<int>());
  p.visible_bias = j.at("visible_bias").get<std::vector<double>>();
  p.hidden_bias = j.at("hidden_bias").get<std::vector<double>>();
  p.weights = j.at("weights").get<std::vector<double>>();
  p.validate();
  return p;
}

// ---- quench estimates ----------------------------------------------------------

inline Json to_json(const QuenchEstimate& e) {
  Json obs = Json::object();
  for (const auto& [name, v] : e.observables) obs[name] = v;
  return {{"times", e.times},
          {"observables", obs},
          {"beta_therm", e.beta_therm ? Json(*e.beta_therm) : Json(nullptr)},
          {"beta_full", e.beta_full ? Json(*e.beta_full) : Json(nullptr)},
          {"energy_rel_variance", json_number(e.energy_rel_variance)}};
}

inline QuenchEstimate quench_estimate_from_json(const Json& j) {
  QuenchEstimate e;
  e.times = j.at("times").get<std::vector<double>>();
  for (const auto& [name, v] : j.at("observables").items()) e.observables.emplace_back(name, v.get<double>());
  if (!j.at("beta_therm").is_null()) e.beta_therm = j.at("beta_therm").get<double>();
  if (!j.at("beta_full").is_null()) e.beta_full = j.at("beta_full").get<double>();
  e.energy_rel_variance = number_from_json(j.at("energy_rel_variance"));
  return e;
}

// ---- configs -------------------------------------------------------------------

inline Json to_json(const NoiseConfig& n) {
  return {{"t1", n.t1},
          {"t_phi", n.t_phi},
          {"shots", n.shots},
          {"amplitude_damping", n.amplitude_damping},
          {"dephasing", n.dephasing},
          {"shot_noise", n.shot_noise}};
}

inline NoiseConfig noise_from_json(const Json& j, NoiseConfig n = {}) {
  n.t1 = j.value("t1", n.t1);
  n.t_phi = j.value("t_phi", n.t_phi);
  n.shots = j.value("shots", n.shots);
  n.amplitude_damping = j.value("amplitude_damping", n.amplitude_damping);
  n.dephasing = j.value("dephasing", n.dephasing);
  n.shot_noise = j.value("shot_noise", n.shot_noise);
  n.validate();
  return n;
}

inline Json to_json(const TrainConfig& c) {
  return {{"model", std::string(to_string(c.model))},
          {"family", std::string(to_string(c.family))},
          {"backend", std::string(to_string(c.backend))},
          {"n_visible", c.n_visible},
          {"n_hidden", c.n_hidden},
          {"n_thermometer", c.n_thermometer},
          {"learning_rate", c.alpha()},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"points_per_epoch", c.points_per_epoch},
          {"quench_times", c.quench_times},
          {"eval_times", c.eval_times},
          {"final_samples", c.final_samples},
          {"fixed_beta", c.fixed_beta},
          {"dbeta", std::string(to_string(c.dbeta))},
          {"noise", to_json(c.noise)},
          {"init",
           {{"gamma_mean", c.init.gamma_mean},
            {"gamma_variance", c.init.gamma_variance},
            {"hidden_bias_variance", c.init.hidden_bias_variance},
            {"weight_variance", c.init.weight_variance},
            {"interaction_variance", c.init.interaction_variance}}},
          {"seed", c.seed},
          {"record_wall_time", c.record_wall_time}};
}

/// Missing keys keep the values of `c`.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  if (j.contains("model")) c.model = parse_model_kind(j.at("model").get<std::string>());
  if (j.contains("family")) c.family = parse_model_family(j.at("family").get<std::string>());
  if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
  c.n_visible = j.value("n_visible", c.n_visible);
  c.n_hidden = j.value("n_hidden", c.n_hidden);
  c.n_thermometer = j.value("n_thermometer", c.n_thermometer);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.points_per_epoch = j.value("points_per_epoch", c.points_per_epoch);
  c.quench_times = j.value("quench_times", c.quench_times);
  c.eval_times = j.value("eval_times", c.eval_times);
  c.final_samples = j.value("final_samples", c.final_samples);
  c.fixed_beta = j.value("fixed_beta", c.fixed_beta);
  if (j.contains("dbeta")) c.dbeta = parse_dbeta_estimator(j.at("dbeta").get<std::string>());
  if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"), c.noise);
  if (j.contains("init")) {
    const auto& i = j.at("init");
    c.init.gamma_mean = i.value("gamma_mean", c.init.gamma_mean);
    c.init.gamma_variance = i.value("gamma_variance", c.init.gamma_variance);
    c.init.hidden_bias_variance = i.value("hidden_bias_variance", c.init.hidden_bias_variance);
    c.init.weight_variance = i.value("weight_variance", c.init.weight_variance);
    c.init.interaction_variance = i.value("interaction_variance", c.init.interaction_variance);
  }
  c.seed = j.value("seed", c.seed);
  c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
  c.validate();
  return c;
}

// ---- spacing statistics ---------------------------------------------------------

inline std::string spacing_histogram_csv(const std::vector<SpacingHistogramRow>& rows) {
  std::string out = "s,empirical_density,fitted_density\n";
  for (const auto& r : rows) {
    out += format_double(r.s) + "," + format_double(r.empirical_density) + "," + format_double(r.fitted_density) + "\n";
  }
  return out;
}

inline Json spacing_fit_json(const BerryRobnikFit& fit, std::size_t n_levels, double normalization) {
  return {{"rho", fit.rho},
          {"n_levels", n_levels},
          {"normalization", normalization},
          {"ks_statistic", fit.ks_statistic},
          {"mean_log_likelihood", fit.mean_log_likelihood},
          {"dropped_zero_spacings", fit.dropped_zero_spacings}};
}

// ---- training runs ----------------------------------------------------------------

inline const char* kMetricsHeader = "epoch,loss_upper,loss_exact,kl,aic,beta_therm,wall_time_s";

inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& m : rows) {
    out += std::to_string(m.epoch) + "," + format_double(m.loss_upper) + "," + format_double(m.loss_exact) + "," +
           format_double(m.kl) + "," + format_double(m.aic) + "," + format_double(m.beta_therm) + "," +
           format_double(m.wall_time_s) + "\n";
  }
  return out;
}

/// Splits on commas; no quoting is ever emitted.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<EpochMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kMetricsHeader, "metrics.csv: bad header");
  std::vector<EpochMetrics> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    require(c.size() == 7, "metrics.csv: expected 7 columns");
    EpochMetrics m;
    m.epoch = std::stoi(c[0]);
    m.loss_upper = parse_double(c[1]);
    m.loss_exact = parse_double(c[2]);
    m.kl = parse_double(c[3]);
    m.aic = parse_double(c[4]);
    m.beta_therm = parse_double(c[5]);
    m.wall_time_s = parse_double(c[6]);
    rows.push_back(m);
  }
  return rows;
}

inline Json params_json(const TrainRun& run, const QbmParameters& qbm, const RbmParameters& rbm) {
  if (run.config.model == ModelKind::rbm) return to_json(rbm);
  return to_json(QbmModel{run.layout, run.spec, qbm, run.config.seed});
}

/// Final sampled metrics of a run.
inline Json metric_report(const TrainRun& run) {
  return {{"kl", json_number(run.final_kl)},
          {"kl_floored", run.final_kl_floored},
          {"aic", json_number(run.final_aic)},
          {"trainable_count", run.trainable},
          {"samples", run.config.final_samples},
          {"min_kl", json_number(run.min_kl)},
          {"best_epoch", run.best_epoch},
          {"steps", run.diagnostics.steps},
          {"beta_clamped", run.diagnostics.beta_clamped},
          {"beta_failures", run.diagnostics.beta_failures},
          {"beta_nonpositive", run.diagnostics.beta_nonpositive},
          {"max_energy_rel_variance", json_number(run.diagnostics.max_energy_rel_variance)},
          {"aborted", run.aborted},
          {"errors", run.errors}};
}

/// config.json, metrics.csv, params_epoch_{k}.json, best_params.json,
/// report.json and the data/model probability tables.
inline void write_train_run(const TrainRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json cfg = to_json(run.config);
  cfg["model_tag"] = run.config.model == ModelKind::rbm ? "rbm" : std::string(to_string(run.config.family));
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  write_text(dir / "metrics.csv", metrics_csv(run.epochs));
  const std::size_t snaps = run.config.model == ModelKind::rbm ? run.rbm_snapshots.size() : run.qbm_snapshots.size();
  for (std::size_t k = 0; k < snaps; ++k) {
    const Json p = run.config.model == ModelKind::rbm ? to_json(run.rbm_snapshots[k])
                                                      : params_json(run, run.qbm_snapshots[k], {});
    write_text(dir / ("params_epoch_" + std::to_string(run.epochs[k].epoch) + ".json"), p.dump(2) + "\n");
  }
  if (run.best_epoch > 0) write_text(dir / "best_params.json", params_json(run, run.qbm_best, run.rbm_best).dump(2) + "\n");
  write_text(dir / "report.json", metric_report(run).dump(2) + "\n");
  std::ostringstream data, model;
  write_table_csv(data, run.data_table, run.config.n_visible);
  write_table_csv(model, run.final_table, run.config.n_visible);
  write_text(dir / "data_table.csv", data.str());
  write_text(dir / "model_table.csv", model.str());
}

}  // namespace ethqbm
