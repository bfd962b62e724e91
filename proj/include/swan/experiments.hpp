#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "swan/agents.hpp"
#include "swan/env.hpp"

namespace swan {

inline const char* to_string(ScenarioKind k) { return k == ScenarioKind::Sparse ? "sparse" : "dense"; }

/// All settings loadable from a flat `key = value` file.
struct Settings {
  SystemConfig sys;
  AgentConfig agent;
  Protocol protocol = Protocol::HSSM;
  ScenarioKind kind = ScenarioKind::Sparse;
  int episode_length = 50;
  int eval_episodes = 100;
};

inline Settings load_settings(const std::string& path) {
  Settings s;
  auto rest = apply_system_keys(s.sys, detail::parse_kv_file(path));
  for (const auto& [k, v] : rest) {
    auto d = [&] { return std::stod(v); };
    auto i = [&] { return std::stoi(v); };
    if (k == "p_update") s.agent.p_update = d();
    else if (k == "sprl_period") s.agent.sprl_period = i();
    else if (k == "ppo_clip") s.agent.ppo_clip = d();
    else if (k == "ppo_epochs") s.agent.ppo_epochs = i();
    else if (k == "ppo_batch_episodes") s.agent.ppo_batch_episodes = i();
    else if (k == "entropy_coef") s.agent.entropy_coef = d();
    else if (k == "discount") s.agent.discount = d();
    else if (k == "actor_lr") s.agent.actor_lr = d();
    else if (k == "critic_lr") s.agent.critic_lr = d();
    else if (k == "hidden") s.agent.hidden = i();
    else if (k == "normalize_advantages") s.agent.normalize_advantages = i() != 0;
    else if (k == "log_std_init") s.agent.log_std_init = d();
    else if (k == "gae_lambda") s.agent.gae_lambda = d();
    else if (k == "max_grad_norm") s.agent.max_grad_norm = d();
    else if (k == "action_reg") s.agent.action_reg = d();
    else if (k == "minibatch") s.agent.minibatch = i();
    else if (k == "matched_gain_init") s.agent.matched_gain_init = d();
    else if (k == "matched_gain_lr") s.agent.matched_gain_lr = d();
    else if (k == "skip_lr") s.agent.skip_lr = d();
    else if (k == "adv_clip") s.agent.adv_clip = d();
    else if (k == "episode_length") s.episode_length = i();
    else if (k == "eval_episodes") s.eval_episodes = i();
    else if (k == "protocol") {
      if (v == "HSSM") s.protocol = Protocol::HSSM;
      else if (v == "SM") s.protocol = Protocol::SM;
      else if (v == "PASS") s.protocol = Protocol::PASS;
      else throw std::runtime_error("config: protocol must be HSSM|SM|PASS");
    } else if (k == "scenario") {
      if (v == "sparse") s.kind = ScenarioKind::Sparse;
      else if (v == "dense") s.kind = ScenarioKind::Dense;
      else throw std::runtime_error("config: scenario must be sparse|dense");
    } else throw std::runtime_error("config: unknown key '" + k + "'");
  }
  s.sys.validate();
  s.agent.validate();
  return s;
}

/// One sweep over waveguide length and/or segment count, a list of
/// algorithms, and a list of seeds.
struct ExperimentSpec {
  Settings base;
  std::vector<std::string> algorithms;
  std::vector<double> length_sweep;  // empty: base length only
  std::vector<int> segment_sweep;    // empty: base segment count only
  std::vector<std::uint64_t> seeds;
  int episodes = 500;
  std::string out_dir = "out";
  int workers = 1;
};

struct RunRecord {
  std::string spec_hash;
  std::string algo;
  std::uint64_t seed = 0;
  std::vector<double> curve;
  double rate_bpshz = 0;
  double illumination_w = 0;
  double wall_clock_s = 0;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Hash of every physical and algorithmic parameter of one sweep cell;
/// algorithm and seed stay out (they are CSV columns of their own).
inline std::string spec_hash(const Settings& s, int episodes) {
  std::ostringstream os;
  os << std::setprecision(17);
  const SystemConfig& c = s.sys;
  os << c.carrier_frequency_hz << '|' << c.effective_refractive_index << '|'
     << c.waveguide_total_length_m << '|' << c.segment_count << '|' << c.antennas_per_segment
     << '|' << c.waveguide_height_m << '|' << c.region_x_m << '|' << c.region_y_m << '|'
     << c.attenuation_db_per_m << '|' << c.total_power_w << '|' << c.noise_power_w << '|'
     << c.bandwidth_hz << '|' << c.sensing_threshold_w << '|' << c.min_spacing_m << '|'
     << c.user_count << '|' << c.target_count << '|' << static_cast<int>(c.sinr_combining) << '|';
  const AgentConfig& a = s.agent;
  os << a.p_update << '|' << a.sprl_period << '|' << a.ppo_clip << '|' << a.ppo_epochs << '|'
     << a.ppo_batch_episodes << '|' << a.entropy_coef << '|' << a.discount << '|' << a.actor_lr
     << '|' << a.critic_lr << '|' << a.hidden << '|' << a.normalize_advantages << '|'
     << a.log_std_init << '|' << a.gae_lambda << '|' << a.max_grad_norm << '|' << a.action_reg
     << '|' << a.minibatch << '|' << a.matched_gain_init << '|' << a.matched_gain_lr << '|'
     << a.skip_lr << '|' << a.adv_clip << '|';
  os << to_string(s.protocol) << '|' << to_string(s.kind) << '|' << s.episode_length << '|'
     << s.eval_episodes << '|' << episodes;
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a64(os.str());
  return hex.str();
}

/// The sweep cells of a spec: (settings, cell label). Length points keep the
/// base segment count; segment points keep the base length.
inline std::vector<Settings> sweep_points(const ExperimentSpec& spec) {
  std::vector<Settings> pts;
  if (spec.length_sweep.empty() && spec.segment_sweep.empty()) pts.push_back(spec.base);
  for (double len : spec.length_sweep) {
    Settings s = spec.base;
    s.sys.waveguide_total_length_m = len;
    pts.push_back(s);
  }
  for (int m : spec.segment_sweep) {
    Settings s = spec.base;
    s.sys.segment_count = m;
    pts.push_back(s);
  }
  return pts;
}

/// Trains and evaluates every (sweep point x algorithm x seed) cell,
/// appending to runs.csv / eval.csv in the output directory. Cells already
/// present in eval.csv are skipped, so interrupted sweeps resume. A failing
/// cell is reported and does not stop the others.
inline std::vector<RunRecord> run_experiment(const ExperimentSpec& spec,
                                             std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);
  const fs::path runs_path = fs::path(spec.out_dir) / "runs.csv";
  const fs::path eval_path = fs::path(spec.out_dir) / "eval.csv";

  // Completed cells from a previous invocation.
  std::set<std::string> done;
  if (fs::exists(eval_path)) {
    std::ifstream in(eval_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      auto f = detail::split_csv(line);
      if (f.size() >= 3) done.insert(f[0] + "|" + f[1] + "|" + f[2]);
    }
  }
  if (!fs::exists(runs_path)) std::ofstream(runs_path) << "spec_hash,algo,seed,episode,reward\n";
  if (!fs::exists(eval_path))
    std::ofstream(eval_path) << "spec_hash,algo,seed,rate_bpshz,illumination_w\n";

  struct Cell {
    Settings settings;
    std::string hash;
    Algo algo;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const Settings& pt : sweep_points(spec)) {
    const std::string h = spec_hash(pt, spec.episodes);
    for (const std::string& algo : spec.algorithms)
      for (std::uint64_t seed : spec.seeds) {
        if (done.count(h + "|" + algo + "|" + std::to_string(seed))) continue;
        Settings s = pt;
        s.agent.algo = algo_from_string(algo);
        cells.push_back({s, h, s.agent.algo, seed});
      }
  }

  std::vector<RunRecord> records;
  std::mutex io_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      try {
        const auto t0 = std::chrono::steady_clock::now();
        TrainResult tr = train(cell.settings.sys, cell.settings.protocol, cell.settings.kind,
                               cell.settings.agent, spec.episodes, cell.settings.episode_length,
                               cell.seed);
        if (tr.diverged)
          throw std::runtime_error("training diverged at episode " +
                                   std::to_string(tr.diverged_episode));
        EvalResult ev = evaluate(cell.settings.sys, cell.settings.protocol, cell.settings.kind,
                                 tr.agent, cell.settings.eval_episodes,
                                 cell.settings.episode_length, cell.seed + 0x9e3779b97f4a7c15ull);
        RunRecord rec{cell.hash, to_string(cell.algo), cell.seed, tr.curve, ev.mean_sum_rate,
                      ev.mean_illumination,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};

        std::lock_guard lock(io_mutex);
        const fs::path run_dir = fs::path(spec.out_dir) / "runs" /
                                 (rec.algo + "_" + to_string(cell.settings.kind) + "_seed" +
                                  std::to_string(cell.seed) + "_" + cell.hash);
        fs::create_directories(run_dir);
        save_checkpoint((run_dir / "checkpoint.txt").string(), tr.agent);
        {
          std::ofstream curve(run_dir / "curve.csv");
          curve << "episode,reward\n";
          for (std::size_t e = 0; e < rec.curve.size(); ++e)
            curve << e << ',' << detail::fmt(rec.curve[e]) << '\n';
        }
        {
          std::ofstream runs(runs_path, std::ios::app);
          for (std::size_t e = 0; e < rec.curve.size(); ++e)
            runs << rec.spec_hash << ',' << rec.algo << ',' << rec.seed << ',' << e << ','
                 << detail::fmt(rec.curve[e]) << '\n';
        }
        std::ofstream(eval_path, std::ios::app)
            << rec.spec_hash << ',' << rec.algo << ',' << rec.seed << ','
            << detail::fmt(rec.rate_bpshz) << ',' << detail::fmt(rec.illumination_w) << '\n';
        if (log)
          *log << "run " << rec.algo << " seed " << rec.seed << " hash " << rec.spec_hash
               << ": rate " << rec.rate_bpshz << " bps/Hz, illumination " << rec.illumination_w
               << " W (" << rec.wall_clock_s << " s)\n";
        records.push_back(std::move(rec));
      } catch (const std::exception& ex) {
        std::lock_guard lock(io_mutex);
        if (log)
          *log << "error: run " << to_string(cell.algo) << " seed " << cell.seed << " failed: "
               << ex.what() << '\n';
      }
    }
  };

  if (spec.workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < spec.workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return records;
}

/// Reads eval.csv back as (hash, algo) -> per-seed (rate, illumination).
inline std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, double>>>
load_eval(const std::string& out_dir) {
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, double>>> by_cell;
  std::ifstream in(std::filesystem::path(out_dir) / "eval.csv");
  if (!in) throw std::runtime_error("missing eval.csv in " + out_dir);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto f = detail::split_csv(line);
    if (f.size() < 5) continue;
    by_cell[{f[0], f[1]}].push_back({std::stod(f[3]), std::stod(f[4])});
  }
  return by_cell;
}

/// Medians over seeds per sweep cell, one table per sweep axis:
/// table1a.csv (varying length) and table1b.csv (varying segment count).
/// Missing cells are reported, never fabricated.
inline void write_table1(const ExperimentSpec& spec, std::ostream& err) {
  auto by_cell = load_eval(spec.out_dir);
  auto write_axis = [&](const std::string& file, const std::string& axis_name, auto&& axis_values,
                        auto&& settings_of) {
    std::ofstream os(std::filesystem::path(spec.out_dir) / file);
    os << axis_name << ",algo,median_rate_bpshz,median_illumination_w\n";
    os << std::setprecision(17);
    for (const auto& val : axis_values) {
      const std::string h = spec_hash(settings_of(val), spec.episodes);
      for (const std::string& algo : spec.algorithms) {
        auto it = by_cell.find({h, algo});
        if (it == by_cell.end() || it->second.empty()) {
          err << "table1: missing cell " << axis_name << "=" << val << " algo=" << algo << '\n';
          continue;
        }
        std::vector<double> rates, ills;
        for (auto [r, g] : it->second) {
          rates.push_back(r);
          ills.push_back(g);
        }
        os << val << ',' << algo << ',' << detail::median(rates) << ',' << detail::median(ills)
           << '\n';
      }
    }
  };
  write_axis("table1a.csv", "L_wg", spec.length_sweep, [&](double len) {
    Settings s = spec.base;
    s.sys.waveguide_total_length_m = len;
    return s;
  });
  write_axis("table1b.csv", "M", spec.segment_sweep, [&](int m) {
    Settings s = spec.base;
    s.sys.segment_count = m;
    return s;
  });
}

/// Trailing moving average with a partial window at the start.
inline std::vector<double> moving_average(const std::vector<double>& x, int window) {
  std::vector<double> out(x.size());
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i];
    if (i >= static_cast<std::size_t>(window)) acc -= x[i - window];
    out[i] = acc / std::min<std::size_t>(i + 1, window);
  }
  return out;
}

/// Smoothed per-episode reward per algorithm per seed, plus the cross-seed
/// median band, written to curves.csv.
inline void write_curves(const ExperimentSpec& spec, int window = 50) {
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<double>> runs;
  {
    std::ifstream in(std::filesystem::path(spec.out_dir) / "runs.csv");
    if (!in) throw std::runtime_error("missing runs.csv in " + spec.out_dir);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      auto f = detail::split_csv(line);
      if (f.size() < 5) continue;
      runs[{f[0], f[1], std::stoull(f[2])}].push_back(std::stod(f[4]));
    }
  }
  std::ofstream os(std::filesystem::path(spec.out_dir) / "curves.csv");
  os << "spec_hash,algo,seed,episode,reward_smoothed\n";
  os << std::setprecision(17);
  std::map<std::pair<std::string, std::string>, std::vector<std::vector<double>>> smoothed;
  for (const auto& [key, curve] : runs) {
    const auto& [hash, algo, seed] = key;
    const std::vector<double> ma = moving_average(curve, window);
    for (std::size_t e = 0; e < ma.size(); ++e)
      os << hash << ',' << algo << ',' << seed << ',' << e << ',' << ma[e] << '\n';
    smoothed[{hash, algo}].push_back(ma);
  }
  for (const auto& [key, curves] : smoothed) {
    std::size_t len = 0;
    for (const auto& c : curves) len = std::max(len, c.size());
    for (std::size_t e = 0; e < len; ++e) {
      std::vector<double> vals;
      for (const auto& c : curves)
        if (e < c.size()) vals.push_back(c[e]);
      os << key.first << ',' << key.second << ",median," << e << ',' << detail::median(vals)
         << '\n';
    }
  }
}

}  // namespace swan
