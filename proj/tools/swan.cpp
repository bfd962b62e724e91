// Command-line front end: validate configs, train/evaluate runs, and
// aggregate results into the table and curve CSVs.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "swan/experiments.hpp"

namespace {

int self_test_physics(const swan::SystemConfig& cfg) {
  using namespace swan;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double alpha = kSpeedOfLight / (4.0 * std::numbers::pi * cfg.carrier_frequency_hz);
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const Point3 a{unit(rng) * cfg.region_x_m, waveguide_y(cfg), cfg.waveguide_height_m};
    const Point3 g{unit(rng) * cfg.region_x_m, unit(rng) * cfg.region_y_m, 0.0};
    const double r = distance(a, g);
    if (std::abs(std::abs(freespace_channel(a, g, cfg)) * r - alpha) > 1e-12 * alpha) ++failures;
    const double len = unit(rng) * cfg.segment_length();
    const double expect = std::pow(10.0, -cfg.attenuation_db_per_m * len / 20.0) /
                          std::sqrt(static_cast<double>(cfg.antennas_per_segment));
    if (std::abs(std::abs(in_waveguide_gain(0.0, len, cfg)) - expect) > 1e-12 * expect) ++failures;
  }
  if (failures) {
    std::cerr << "error: physics self-test failed on " << failures << " geometries\n";
    return 1;
  }
  std::cout << "physics self-test: 1000 geometries ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmented-waveguide pinching-antenna ISAC simulator and RL trainer"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", trace_path;
  std::vector<std::string> algos{"SHRL"};
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> lengths;
  std::vector<int> segments;
  int episodes = 500, workers = 1, window = 50;

  auto* validate = app.add_subcommand("validate", "check a config file and run physics self-tests");
  validate->add_option("--config", config_path, "config file (key = value lines)");

  auto* run = app.add_subcommand("run", "train and evaluate agents");
  run->add_option("--config", config_path, "config file");
  run->add_option("--algo", algos, "algorithms: SHRL SPRL A2C PPO Random");
  run->add_option("--seed", seeds, "training seeds");
  run->add_option("--episodes", episodes, "training episodes per run");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--length", lengths, "sweep of total waveguide lengths (m)");
  run->add_option("--segments", segments, "sweep of segment counts");
  run->add_option("--workers", workers, "parallel runs (1 keeps CSV order deterministic)");
  run->add_option("--trace", trace_path, "write one greedy episode trace CSV here");

  auto* table1 = app.add_subcommand("table1", "aggregate eval.csv into table1a/table1b CSVs");
  table1->add_option("--config", config_path, "config file");
  table1->add_option("--out", out_dir, "output directory with eval.csv");
  table1->add_option("--episodes", episodes, "episodes the runs were trained for");
  table1->add_option("--algo", algos, "algorithms to tabulate");

  auto* curves = app.add_subcommand("curves", "smoothed learning curves from runs.csv");
  curves->add_option("--config", config_path, "config file");
  curves->add_option("--out", out_dir, "output directory with runs.csv");
  curves->add_option("--episodes", episodes, "episodes the runs were trained for");
  curves->add_option("--window", window, "moving-average window");

  CLI11_PARSE(app, argc, argv);

  try {
    swan::Settings settings;
    if (!config_path.empty()) settings = swan::load_settings(config_path);
    settings.sys.validate();

    if (validate->parsed()) {
      std::cout << "config ok: M=" << settings.sys.segment_count
                << " N=" << settings.sys.antennas_per_segment
                << " L_wg=" << settings.sys.waveguide_total_length_m << " m, lambda="
                << settings.sys.free_space_wavelength() << " m, delta=" << settings.sys.spacing()
                << " m\n";
      return self_test_physics(settings.sys);
    }

    swan::ExperimentSpec spec;
    spec.base = settings;
    spec.algorithms = algos;
    spec.seeds = {seeds.begin(), seeds.end()};
    spec.episodes = episodes;
    spec.out_dir = out_dir;
    spec.workers = workers;
    spec.length_sweep = lengths;
    spec.segment_sweep = segments;

    if (run->parsed()) {
      auto records = swan::run_experiment(spec, &std::cout);
      if (!trace_path.empty() && !records.empty()) {
        // Trace the first record's checkpointed greedy policy for one episode.
        const auto& rec = records.front();
        const auto dir = std::filesystem::path(out_dir) / "runs" /
                         (rec.algo + "_" + swan::to_string(settings.kind) + "_seed" +
                          std::to_string(rec.seed) + "_" + rec.spec_hash);
        swan::Agent agent = swan::load_checkpoint((dir / "checkpoint.txt").string());
        agent.cfg = settings.agent;
        agent.cfg.algo = swan::algo_from_string(rec.algo);
        std::ofstream trace(trace_path);
        swan::evaluate(settings.sys, settings.protocol, settings.kind, agent, 1,
                       settings.episode_length, rec.seed + 1, &trace);
        std::cout << "trace written to " << trace_path << '\n';
      }
      return 0;
    }
    if (table1->parsed()) {
      if (spec.length_sweep.empty()) spec.length_sweep = {40, 60, 80, 100};
      if (spec.segment_sweep.empty()) spec.segment_sweep = {3, 6, 9, 12};
      swan::write_table1(spec, std::cerr);
      std::cout << "wrote " << out_dir << "/table1a.csv and table1b.csv\n";
      return 0;
    }
    if (curves->parsed()) {
      swan::write_curves(spec, window);
      std::cout << "wrote " << out_dir << "/curves.csv\n";
      return 0;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
