#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "swan/env.hpp"

using namespace swan;

namespace {

SystemConfig base_config() {
  SystemConfig cfg;
  cfg.validate();
  return cfg;
}

EnvAction random_raw_action(const SystemConfig& cfg, std::mt19937_64& rng, double span = 100.0) {
  std::uniform_real_distribution<double> u(-span, span);
  EnvAction a;
  for (int i = 0; i < cfg.segment_count * cfg.antennas_per_segment; ++i)
    a.raw_positions.push_back(u(rng));
  for (int m = 0; m < cfg.segment_count; ++m) a.raw_segment_logits.push_back(u(rng) / 10.0);
  for (int i = 0; i < 2 * cfg.user_count * cfg.segment_count; ++i) a.raw_beam.push_back(u(rng));
  return a;
}

}  // namespace

TEST_CASE("scenario generation") {
  SystemConfig cfg = base_config();

  SECTION("same seed, same scenario") {
    const Scenario a = make_scenario(ScenarioKind::Sparse, cfg, 42);
    const Scenario b = make_scenario(ScenarioKind::Sparse, cfg, 42);
    REQUIRE(a.user_positions.size() == b.user_positions.size());
    for (std::size_t i = 0; i < a.user_positions.size(); ++i) {
      CHECK(a.user_positions[i].x == b.user_positions[i].x);
      CHECK(a.user_positions[i].y == b.user_positions[i].y);
    }
  }
  SECTION("sparse: users and targets on disjoint halves") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const Scenario s = make_scenario(ScenarioKind::Sparse, cfg, seed);
      for (const Point3& p : s.user_positions) CHECK(p.x <= cfg.region_x_m / 2.0);
      for (const Point3& p : s.target_positions) CHECK(p.x >= cfg.region_x_m / 2.0);
    }
  }
  SECTION("dense: everyone within a 20 m diameter, inside the region") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const Scenario s = make_scenario(ScenarioKind::Dense, cfg, seed);
      std::vector<Point3> all = s.user_positions;
      all.insert(all.end(), s.target_positions.begin(), s.target_positions.end());
      for (const Point3& p : all) {
        CHECK((p.x >= 0 && p.x <= cfg.region_x_m));
        CHECK((p.y >= 0 && p.y <= cfg.region_y_m));
      }
      for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
          CHECK(distance(all[i], all[j]) <= 20.0 + 1e-12);
    }
  }
}

TEST_CASE("action projection") {
  SystemConfig cfg = base_config();
  std::mt19937_64 rng(5);
  const double delta = cfg.spacing();

  SECTION("already-feasible action is unchanged") {
    EnvAction a;
    for (int m = 0; m < cfg.segment_count; ++m)
      for (int n = 0; n < cfg.antennas_per_segment; ++n)
        a.raw_positions.push_back(m * cfg.segment_length() + (n + 0.5) * 1.0);
    a.raw_segment_logits = {0.3, -0.4, 1.2};
    for (int i = 0; i < 2 * cfg.user_count * cfg.segment_count; ++i)
      a.raw_beam.push_back(0.1 * (i % 7));
    const Projected p = project_action(a, cfg);
    for (std::size_t i = 0; i < a.raw_positions.size(); ++i)
      CHECK(p.layout.positions[i] == a.raw_positions[i]);
  }
  SECTION("coincident positions come out spaced exactly delta") {
    EnvAction a = random_raw_action(cfg, rng);
    for (double& x : a.raw_positions) x = 5.0;
    const Projected p = project_action(a, cfg);
    for (int n = 0; n + 1 < cfg.antennas_per_segment; ++n)
      CHECK(p.layout.at(0, n + 1) - p.layout.at(0, n) == Catch::Approx(delta).epsilon(1e-12));
  }
  SECTION("over-powered beam is scaled onto the budget") {
    EnvAction a = random_raw_action(cfg, rng);
    a.raw_segment_logits = {3.0, 3.0, 3.0};  // keep every column live
    // Force ||W||^2 = 4 P.
    double p2 = 0;
    for (double v : a.raw_beam) p2 += v * v;
    const double s = std::sqrt(4.0 * cfg.total_power_w / p2);
    for (double& v : a.raw_beam) v *= s;
    const Projected p = project_action(a, cfg);
    CHECK(p.beam.power() == Catch::Approx(cfg.total_power_w).epsilon(1e-9));
  }
  SECTION("projection is idempotent") {
    for (int i = 0; i < 100; ++i) {
      const Projected p1 = project_action(random_raw_action(cfg, rng), cfg);
      const Projected p2 = project_action(as_raw_action(p1, cfg), cfg);
      for (std::size_t j = 0; j < p1.layout.positions.size(); ++j)
        CHECK(std::abs(p2.layout.positions[j] - p1.layout.positions[j]) <= 1e-12);
      for (std::size_t j = 0; j < p1.beam.w.size(); ++j)
        CHECK(std::abs(p2.beam.w[j] - p1.beam.w[j]) <= 1e-12);
      CHECK(p2.active == p1.active);
    }
  }
  SECTION("projected actions satisfy bounds and spacing") {
    for (int i = 0; i < 500; ++i) {
      const Projected p = project_action(random_raw_action(cfg, rng), cfg);
      CHECK(p.beam.power() <= cfg.total_power_w * (1.0 + 1e-9));
      for (int m = 0; m < cfg.segment_count; ++m) {
        for (int n = 0; n < cfg.antennas_per_segment; ++n) {
          CHECK(p.layout.at(m, n) >= m * cfg.segment_length() - 1e-12);
          CHECK(p.layout.at(m, n) <= (m + 1) * cfg.segment_length() + 1e-12);
          if (n > 0) CHECK(p.layout.at(m, n) - p.layout.at(m, n - 1) >= delta * (1 - 1e-12));
        }
      }
    }
  }
}

TEST_CASE("hysteresis gate") {
  std::mt19937_64 rng(9);

  SECTION("p_update = 1 always accepts") {
    HysteresisMemory mem{{1, 1, 1}, 1.0};
    const std::vector<std::uint8_t> next{0, 1, 0};
    for (int i = 0; i < 100; ++i) CHECK(hysteresis_gate(next, mem, rng) == next);
  }
  SECTION("p_update = 0 always retains") {
    HysteresisMemory mem{{1, 1, 1}, 0.0};
    const std::vector<std::uint8_t> next{0, 0, 0};
    for (int i = 0; i < 100; ++i)
      CHECK(hysteresis_gate(next, mem, rng) == std::vector<std::uint8_t>{1, 1, 1});
  }
  SECTION("empirical accept rate ~ 0.3") {
    HysteresisMemory mem{{1}, 0.3};
    int accepts = 0;
    std::vector<std::uint8_t> last{1};
    for (int i = 0; i < 10000; ++i) {
      const std::vector<std::uint8_t> next{static_cast<std::uint8_t>(1 - last[0])};
      const auto out = hysteresis_gate(next, mem, rng);
      if (out == next) {
        ++accepts;
        last = out;
      }
    }
    CHECK(accepts / 10000.0 == Catch::Approx(0.3).margin(0.02));
  }
}

TEST_CASE("reward") {
  SECTION("all targets satisfied") {
    CHECK(reward_value({2.0, 3.0}, {2e-5}, 1e-5) == Catch::Approx(5.0));
  }
  SECTION("one violated target") {
    CHECK(reward_value({2.0, 3.0}, {0.5e-5}, 1e-5) == Catch::Approx(4.0));
  }
  SECTION("zero beam: minus the target count") {
    CHECK(reward_value({0.0, 0.0}, {0.0, 0.0, 0.0}, 1e-5) == Catch::Approx(-3.0));
  }
}

TEST_CASE("environment step/reset") {
  SystemConfig cfg = base_config();
  const Scenario scn = make_scenario(ScenarioKind::Sparse, cfg, 17);
  std::mt19937_64 rng(3);

  SECTION("reset is deterministic and well-formed") {
    Environment env(cfg, Protocol::HSSM);
    const auto s1 = env.reset(scn, 5);
    const auto s2 = env.reset(scn, 5);
    CHECK(s1 == s2);
    CHECK(static_cast<int>(s1.size()) == env.state_dim());
    CHECK(env.beam().power() == Catch::Approx(100.0).epsilon(1e-12));
    const double step = cfg.segment_length() / cfg.antennas_per_segment;
    CHECK(env.layout().at(0, 1) - env.layout().at(0, 0) == Catch::Approx(step));
    CHECK(step >= cfg.spacing());
  }
  SECTION("zero policy action maps to the reset configuration") {
    Environment env(cfg, Protocol::SM);
    env.reset(scn, 5);
    const std::vector<double> zero(action_dim(cfg), 0.0);
    const Projected p = project_action(unpack_action(scale_action(zero, cfg), cfg), cfg);
    CHECK(p.layout.positions == env.layout().positions);
    CHECK(p.beam.power() == Catch::Approx(cfg.total_power_w).epsilon(1e-12));
    CHECK(p.active == std::vector<std::uint8_t>(cfg.segment_count, 1));
  }
  SECTION("SM keeps every segment active") {
    Environment env(cfg, Protocol::SM);
    env.reset(scn, 5);
    for (int t = 0; t < 10; ++t) {
      EnvAction a = random_raw_action(cfg, rng);
      env.step(a);
      for (std::uint8_t m : env.activation()) CHECK(m == 1);
    }
  }
  SECTION("identical projected actions give identical rewards") {
    Environment env(cfg, Protocol::SM);
    env.reset(scn, 5);
    EnvAction a = random_raw_action(cfg, rng);
    const auto r1 = env.step(a);
    const auto r2 = env.step(a);
    CHECK(r1.reward == r2.reward);
    CHECK(r1.report.sum_rate == r2.report.sum_rate);
  }
  SECTION("HSSM with p_update = 0 never changes activation") {
    Environment env(cfg, Protocol::HSSM, 0.0);
    env.reset(scn, 5);
    for (int t = 0; t < 20; ++t) {
      env.step(random_raw_action(cfg, rng));
      CHECK(env.activation() == std::vector<std::uint8_t>{1, 1, 1});
    }
  }
  SECTION("step reports always satisfy (7b)-(7d)") {
    Environment env(cfg, Protocol::HSSM, 0.5);
    env.reset(scn, 5);
    for (int t = 0; t < 30; ++t) {
      const auto res = env.step(random_raw_action(cfg, rng));
      CHECK(res.report.flags.power);
      CHECK(res.report.flags.activation);
      CHECK(res.report.flags.spacing);
      CHECK(res.reward == Catch::Approx(reward_value(res.report.per_user_rate,
                                                     res.report.per_target_illumination,
                                                     cfg.sensing_threshold_w)));
    }
  }
  SECTION("episode terminates after the configured length") {
    Environment env(cfg, Protocol::HSSM, 0.1, 5);
    env.reset(scn, 5);
    for (int t = 0; t < 5; ++t) {
      const auto res = env.step(random_raw_action(cfg, rng));
      CHECK(res.done == (t == 4));
    }
    CHECK_THROWS_AS(env.step(random_raw_action(cfg, rng)), std::logic_error);
  }
  SECTION("PASS collapses to one full-length guide") {
    Environment env(cfg, Protocol::PASS);
    CHECK(env.config().segment_count == 1);
    CHECK(env.config().antennas_per_segment == 30);
    CHECK(env.config().segment_length() == Catch::Approx(40.0));
    env.reset(scn, 5);
    EnvAction a = random_raw_action(env.config(), rng);
    const auto res = env.step(a);
    CHECK(env.activation() == std::vector<std::uint8_t>{1});
    CHECK(res.report.per_user_rate.size() == static_cast<std::size_t>(cfg.user_count));
  }
  SECTION("trajectory is bit-for-bit reproducible") {
    auto roll = [&](std::uint64_t seed) {
      Environment env(cfg, Protocol::HSSM, 0.3);
      env.reset(scn, seed);
      std::mt19937_64 arng(7);
      std::vector<double> rewards;
      for (int t = 0; t < 10; ++t) rewards.push_back(env.step(random_raw_action(cfg, arng)).reward);
      return rewards;
    };
    CHECK(roll(11) == roll(11));
  }
}
