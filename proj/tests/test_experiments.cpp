#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "swan/experiments.hpp"

using namespace swan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("swan_test_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream(p) << content;
}

/// A deliberately tiny problem so training cells finish in milliseconds.
Settings tiny_settings() {
  Settings s;
  s.sys.segment_count = 2;
  s.sys.antennas_per_segment = 2;
  s.sys.user_count = 2;
  s.sys.target_count = 1;
  s.agent.hidden = 8;
  s.episode_length = 5;
  s.eval_episodes = 2;
  s.sys.validate();
  return s;
}

}  // namespace

TEST_CASE("settings files") {
  TempDir tmp("settings");

  SECTION("round trip of representative keys") {
    write_file(tmp.path / "a.cfg",
               "# comment line\n"
               "carrier_frequency_hz = 28e9\n"
               "segment_count = 4   # trailing comment\n"
               "noise_power_dbm = -90\n"
               "sensing_threshold_dbm = -20\n"
               "p_update = 0.25\n"
               "protocol = SM\n"
               "scenario = dense\n"
               "episode_length = 25\n"
               "hidden = 64\n");
    const Settings s = load_settings((tmp.path / "a.cfg").string());
    CHECK(s.sys.segment_count == 4);
    CHECK(s.sys.noise_power_w == Catch::Approx(1e-12));
    CHECK(s.sys.sensing_threshold_w == Catch::Approx(1e-5));
    CHECK(s.agent.p_update == 0.25);
    CHECK(s.protocol == Protocol::SM);
    CHECK(s.kind == ScenarioKind::Dense);
    CHECK(s.episode_length == 25);
    CHECK(s.agent.hidden == 64);
  }
  SECTION("unknown key rejected") {
    write_file(tmp.path / "b.cfg", "no_such_knob = 1\n");
    CHECK_THROWS_AS(load_settings((tmp.path / "b.cfg").string()), std::runtime_error);
  }
  SECTION("malformed line rejected") {
    write_file(tmp.path / "c.cfg", "just words without equals\n");
    CHECK_THROWS_AS(load_settings((tmp.path / "c.cfg").string()), std::runtime_error);
  }
  SECTION("infeasible values rejected by validation") {
    write_file(tmp.path / "d.cfg", "total_power_w = -5\n");
    CHECK_THROWS_AS(load_settings((tmp.path / "d.cfg").string()), std::invalid_argument);
  }
}

TEST_CASE("spec hash") {
  const Settings base = tiny_settings();
  const std::string h0 = spec_hash(base, 100);
  CHECK(h0.size() == 16);

  SECTION("stable for identical settings") { CHECK(spec_hash(base, 100) == h0); }
  SECTION("sensitive to every settings field") {
    std::vector<std::pair<const char*, Settings>> variants;
    auto add = [&](const char* name, auto&& mutate) {
      Settings s = base;
      mutate(s);
      variants.emplace_back(name, s);
    };
    add("carrier", [](Settings& s) { s.sys.carrier_frequency_hz *= 2; });
    add("refractive", [](Settings& s) { s.sys.effective_refractive_index = 1.5; });
    add("length", [](Settings& s) { s.sys.waveguide_total_length_m = 60; });
    add("segments", [](Settings& s) { s.sys.segment_count = 3; });
    add("antennas", [](Settings& s) { s.sys.antennas_per_segment = 3; });
    add("height", [](Settings& s) { s.sys.waveguide_height_m = 6; });
    add("region_x", [](Settings& s) { s.sys.region_x_m = 55; });
    add("region_y", [](Settings& s) { s.sys.region_y_m = 65; });
    add("attenuation", [](Settings& s) { s.sys.attenuation_db_per_m = 0.1; });
    add("power", [](Settings& s) { s.sys.total_power_w = 50; });
    add("noise", [](Settings& s) { s.sys.noise_power_w = 1e-11; });
    add("bandwidth", [](Settings& s) { s.sys.bandwidth_hz = 2; });
    add("threshold", [](Settings& s) { s.sys.sensing_threshold_w = 2e-5; });
    add("spacing", [](Settings& s) { s.sys.min_spacing_m = 0.01; });
    add("users", [](Settings& s) { s.sys.user_count = 3; });
    add("targets", [](Settings& s) { s.sys.target_count = 2; });
    add("combining", [](Settings& s) { s.sys.sinr_combining = SinrCombining::PerSegmentPower; });
    add("p_update", [](Settings& s) { s.agent.p_update = 0.2; });
    add("sprl_period", [](Settings& s) { s.agent.sprl_period = 7; });
    add("ppo_clip", [](Settings& s) { s.agent.ppo_clip = 0.3; });
    add("ppo_epochs", [](Settings& s) { s.agent.ppo_epochs = 2; });
    add("ppo_batch", [](Settings& s) { s.agent.ppo_batch_episodes = 4; });
    add("entropy", [](Settings& s) { s.agent.entropy_coef = 1e-2; });
    add("discount", [](Settings& s) { s.agent.discount = 0.95; });
    add("actor_lr", [](Settings& s) { s.agent.actor_lr = 1e-4; });
    add("critic_lr", [](Settings& s) { s.agent.critic_lr = 1e-4; });
    add("hidden", [](Settings& s) { s.agent.hidden = 16; });
    add("norm_adv", [](Settings& s) { s.agent.normalize_advantages = false; });
    add("log_std_init", [](Settings& s) { s.agent.log_std_init = -0.5; });
    add("gae_lambda", [](Settings& s) { s.agent.gae_lambda = 0.5; });
    add("max_grad_norm", [](Settings& s) { s.agent.max_grad_norm = 1.5; });
    add("action_reg", [](Settings& s) { s.agent.action_reg = 1e-2; });
    add("minibatch", [](Settings& s) { s.agent.minibatch = 5; });
    add("protocol", [](Settings& s) { s.protocol = Protocol::SM; });
    add("scenario", [](Settings& s) { s.kind = ScenarioKind::Dense; });
    add("ep_len", [](Settings& s) { s.episode_length = 6; });
    add("eval_eps", [](Settings& s) { s.eval_episodes = 3; });

    for (const auto& [name, s] : variants) {
      INFO(name);
      CHECK(spec_hash(s, 100) != h0);
    }
    CHECK(spec_hash(base, 101) != h0);  // episode budget is part of the hash
  }
}

TEST_CASE("moving average") {
  SECTION("1..100 with window 50 ends at 75.5") {
    std::vector<double> x(100);
    for (int i = 0; i < 100; ++i) x[i] = i + 1;
    const auto ma = moving_average(x, 50);
    REQUIRE(ma.size() == 100);
    CHECK(ma.front() == Catch::Approx(1.0));
    CHECK(ma[1] == Catch::Approx(1.5));  // partial window at the start
    CHECK(ma.back() == Catch::Approx(75.5));
  }
  SECTION("window 1 is the identity") {
    const std::vector<double> x{3.0, -1.0, 4.0};
    CHECK(moving_average(x, 1) == x);
  }
  SECTION("constant input stays constant") {
    const std::vector<double> x(20, 2.5);
    for (double v : moving_average(x, 7)) CHECK(v == Catch::Approx(2.5));
  }
}

TEST_CASE("experiment runner") {
  TempDir tmp("runner");
  ExperimentSpec spec;
  spec.base = tiny_settings();
  spec.algorithms = {"Random", "SHRL"};
  spec.seeds = {1, 2};
  spec.episodes = 3;
  spec.out_dir = (tmp.path / "out").string();

  SECTION("empty algorithm list still produces the headers") {
    ExperimentSpec empty = spec;
    empty.algorithms.clear();
    CHECK(run_experiment(empty).empty());
    CHECK(slurp(fs::path(empty.out_dir) / "runs.csv") == "spec_hash,algo,seed,episode,reward\n");
    CHECK(slurp(fs::path(empty.out_dir) / "eval.csv") ==
          "spec_hash,algo,seed,rate_bpshz,illumination_w\n");
  }
  SECTION("runs all cells, then resumes without re-running") {
    std::ostringstream log;
    const auto records = run_experiment(spec, &log);
    REQUIRE(records.size() == 4);
    for (const auto& rec : records) {
      CHECK(rec.curve.size() == 3);
      const fs::path run_dir = fs::path(spec.out_dir) / "runs" /
                               (rec.algo + "_sparse_seed" + std::to_string(rec.seed) + "_" +
                                rec.spec_hash);
      CHECK(fs::exists(run_dir / "checkpoint.txt"));
      CHECK(fs::exists(run_dir / "curve.csv"));
    }
    const std::string runs1 = slurp(fs::path(spec.out_dir) / "runs.csv");
    const std::string eval1 = slurp(fs::path(spec.out_dir) / "eval.csv");
    // 4 cells x 3 episodes + header.
    CHECK(std::count(runs1.begin(), runs1.end(), '\n') == 13);
    CHECK(std::count(eval1.begin(), eval1.end(), '\n') == 5);

    CHECK(run_experiment(spec).empty());  // everything already done
    CHECK(slurp(fs::path(spec.out_dir) / "runs.csv") == runs1);
    CHECK(slurp(fs::path(spec.out_dir) / "eval.csv") == eval1);

    // A new seed appends just its own cells.
    ExperimentSpec wider = spec;
    wider.seeds = {1, 2, 3};
    CHECK(run_experiment(wider).size() == 2);
    const std::string runs2 = slurp(fs::path(spec.out_dir) / "runs.csv");
    CHECK(runs2.substr(0, runs1.size()) == runs1);
  }
  SECTION("length sweep cells get distinct hashes and table rows") {
    ExperimentSpec sweep = spec;
    sweep.algorithms = {"Random"};
    sweep.seeds = {1};
    sweep.length_sweep = {40.0, 60.0};
    const auto records = run_experiment(sweep);
    REQUIRE(records.size() == 2);
    CHECK(records[0].spec_hash != records[1].spec_hash);

    // Ask the table writer for a point that was never run.
    ExperimentSpec with_missing = sweep;
    with_missing.length_sweep = {40.0, 60.0, 99.0};
    std::ostringstream err;
    write_table1(with_missing, err);
    CHECK(err.str().find("missing cell") != std::string::npos);
    CHECK(err.str().find("99") != std::string::npos);
    const std::string table = slurp(fs::path(sweep.out_dir) / "table1a.csv");
    CHECK(table.find("40,Random,") != std::string::npos);
    CHECK(table.find("60,Random,") != std::string::npos);
    CHECK(table.find("99,") == std::string::npos);
  }
}

TEST_CASE("curve smoothing output") {
  TempDir tmp("curves");
  ExperimentSpec spec;
  spec.base = tiny_settings();
  spec.algorithms = {"A2C"};
  spec.out_dir = tmp.path.string();

  // Synthetic runs.csv: two seeds with constant rewards 1 and 3.
  {
    std::ofstream runs(tmp.path / "runs.csv");
    runs << "spec_hash,algo,seed,episode,reward\n";
    for (int e = 0; e < 10; ++e) runs << "abc,A2C,1," << e << ",1\n";
    for (int e = 0; e < 10; ++e) runs << "abc,A2C,2," << e << ",3\n";
  }
  write_curves(spec, 4);
  std::ifstream in(tmp.path / "curves.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "spec_hash,algo,seed,episode,reward_smoothed");
  int seed1 = 0, seed2 = 0, med = 0;
  while (std::getline(in, line)) {
    const auto f = detail::split_csv(line);
    REQUIRE(f.size() == 5);
    if (f[2] == "1") {
      ++seed1;
      CHECK(std::stod(f[4]) == Catch::Approx(1.0));  // constant stays constant
    } else if (f[2] == "2") {
      ++seed2;
      CHECK(std::stod(f[4]) == Catch::Approx(3.0));
    } else if (f[2] == "median") {
      ++med;
      CHECK(std::stod(f[4]) == Catch::Approx(2.0));  // median of the two bands
    }
  }
  CHECK(seed1 == 10);
  CHECK(seed2 == 10);
  CHECK(med == 10);
}
