// Command-line front end: one subcommand per experiment kind.
//
//   ethqbm_cli train-kl --config cfg.json --out results/ --seed 7 --threads 2 --backend quench

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ethqbm/experiments.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string out = "results";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> backend;
  std::vector<int> n_visible;
  std::optional<int> instances;
  std::optional<int> epochs;
  bool wall_time = false;
};

ethqbm::ExperimentConfig load_config(ethqbm::ExperimentKind kind, const Options& o) {
  using namespace ethqbm;
  ExperimentConfig c;
  c.kind = kind;
  Json j = Json::object();
  if (!o.config_path.empty()) j = Json::parse(read_text(o.config_path));
  // the subcommand decides the kind
  j["kind"] = std::string(to_string(kind));
  if (o.seed) j["seed"] = *o.seed;
  if (o.threads) j["threads"] = *o.threads;
  if (!o.n_visible.empty()) j["n_visible"] = o.n_visible;
  if (o.instances) j["instances"] = *o.instances;
  if (o.epochs) j["train"]["epochs"] = *o.epochs;
  // off by default so reruns stay byte-identical
  if (o.wall_time) j["train"]["record_wall_time"] = true;
  if (o.backend) {
    const Backend b = parse_backend(*o.backend);
    j["train"]["backend"] = std::string(to_string(b));
    if (kind == ExperimentKind::train_kl || kind == ExperimentKind::train_aic || kind == ExperimentKind::kl_ratio) {
      std::vector<std::string> series{"rbm", "qbm_exact"};
      if (b != Backend::exact) series.push_back("qbm_" + std::string(to_string(b)));
      j["series"] = series;
    }
  }
  return experiment_config_from_json(j, c);
}

int run(ethqbm::ExperimentKind kind, const Options& o) {
  using namespace ethqbm;
  const ExperimentConfig config = load_config(kind, o);
  std::fprintf(stderr, "%s: config %s, %d instance(s), %d thread(s)\n", std::string(to_string(kind)).c_str(),
               config_hash(config).c_str(), config.instances, config.threads);
  const RunRecord record = run_experiment(config);
  write_run_record(record, o.out);

  std::size_t failed = 0;
  for (const auto& r : record.rows) failed += r.status != "ok";
  std::printf("# %s  metric=%s  config=%s\n", std::string(to_string(kind)).c_str(), record.plot_metric.c_str(),
              record.config_hash.c_str());
  std::printf("%-28s %10s %14s %14s\n", "series", "x", "mean", "stderr");
  for (const auto& p : record.plot) {
    std::printf("%-28s %10s %14.6g %14.6g\n", p.series.c_str(), format_double(p.x).c_str(), p.y, p.yerr);
  }
  if (failed) std::printf("%zu row(s) not ok; see metrics.csv\n", failed);
  std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermalization-based QBM training experiments"};
  app.require_subcommand(1);
  Options o;
  std::map<CLI::App*, ethqbm::ExperimentKind> kinds;
  for (auto kind : ethqbm::kAllExperimentKinds) {
    auto* sub = app.add_subcommand(std::string(ethqbm::to_string(kind)));
    sub->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--backend", o.backend, "QBM backend: exact, quench or quench_noise");
    sub->add_option("--n-visible", o.n_visible, "visible unit counts");
    sub->add_option("--instances", o.instances, "instances per point")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_flag("--wall-time", o.wall_time, "record per-epoch wall time in metrics.csv");
    kinds[sub] = kind;
  }
  CLI11_PARSE(app, argc, argv);
  try {
    for (const auto& [sub, kind] : kinds) {
      if (sub->parsed()) return run(kind, o);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
