#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "swan/metrics.hpp"
#include "swan/physics.hpp"

namespace swan {

enum class ScenarioKind { Sparse, Dense };
enum class Protocol { HSSM, SM, PASS };

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::HSSM: return "HSSM";
    case Protocol::SM: return "SM";
    default: return "PASS";
  }
}

/// Draws one episode's user/target placement. Sparse puts users in the left
/// half of the region and targets in the right half; dense draws everyone
/// from one 10 m-radius disc centered uniformly at random. Deterministic
/// given the seed.
inline Scenario make_scenario(ScenarioKind kind, const SystemConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scenario scn;
  scn.user_positions.reserve(cfg.user_count);
  scn.target_positions.reserve(cfg.target_count);
  if (kind == ScenarioKind::Sparse) {
    for (int k = 0; k < cfg.user_count; ++k)
      scn.user_positions.push_back({unit(rng) * cfg.region_x_m / 2.0, unit(rng) * cfg.region_y_m, 0.0});
    for (int k = 0; k < cfg.target_count; ++k)
      scn.target_positions.push_back(
          {cfg.region_x_m / 2.0 + unit(rng) * cfg.region_x_m / 2.0, unit(rng) * cfg.region_y_m, 0.0});
  } else {
    constexpr double kDiscRadius = 10.0;
    const Point3 center{unit(rng) * cfg.region_x_m, unit(rng) * cfg.region_y_m, 0.0};
    auto draw_in_disc = [&] {
      // Rejection sample until the point lands inside the service region.
      for (;;) {
        const double u = unit(rng), v = unit(rng);
        const double r = kDiscRadius * std::sqrt(u);
        const double ang = 2.0 * std::numbers::pi * v;
        const Point3 p{center.x + r * std::cos(ang), center.y + r * std::sin(ang), 0.0};
        if (p.x >= 0 && p.x <= cfg.region_x_m && p.y >= 0 && p.y <= cfg.region_y_m) return p;
      }
    };
    for (int k = 0; k < cfg.user_count; ++k) scn.user_positions.push_back(draw_in_disc());
    for (int k = 0; k < cfg.target_count; ++k) scn.target_positions.push_back(draw_in_disc());
  }
  return scn;
}

/// Raw continuous action before projection onto the feasible set.
struct EnvAction {
  std::vector<double> raw_positions;       // segments * antennas_per_segment
  std::vector<double> raw_segment_logits;  // segments
  std::vector<double> raw_beam;            // 2 * users * segments, re/im interleaved
};

inline int action_dim(const SystemConfig& cfg) {
  return cfg.segment_count * cfg.antennas_per_segment + cfg.segment_count +
         2 * cfg.user_count * cfg.segment_count;
}

inline EnvAction unpack_action(const std::vector<double>& flat, const SystemConfig& cfg) {
  if (static_cast<int>(flat.size()) != action_dim(cfg))
    throw std::invalid_argument("unpack_action: dimension mismatch");
  EnvAction a;
  auto it = flat.begin();
  a.raw_positions.assign(it, it + cfg.segment_count * cfg.antennas_per_segment);
  it += cfg.segment_count * cfg.antennas_per_segment;
  a.raw_segment_logits.assign(it, it + cfg.segment_count);
  it += cfg.segment_count;
  a.raw_beam.assign(it, flat.end());
  return a;
}

struct Projected {
  AntennaLayout layout;
  std::vector<double> activation;      // squashed logits in [0,1] (or the override)
  std::vector<std::uint8_t> active;    // binarized at 0.5
  BeamMatrix beam;
};

/// Maps a raw action onto the feasible set: positions clamped into their
/// segment span, sorted, and swept to the minimum spacing; logits squashed by
/// the logistic; W scaled down to the power budget and zeroed on inactive
/// segments. Idempotent.
inline Projected project_action(const EnvAction& a, const SystemConfig& cfg,
                                const std::vector<std::uint8_t>* activation_override = nullptr) {
  const int m_count = cfg.segment_count;
  const int n_count = cfg.antennas_per_segment;
  const double seg_len = cfg.segment_length();
  const double delta = cfg.spacing();

  Projected out;
  out.layout = {m_count, n_count, a.raw_positions};
  for (int m = 0; m < m_count; ++m) {
    const double lo = m * seg_len, hi = (m + 1) * seg_len;
    double* x = &out.layout.at(m, 0);
    for (int n = 0; n < n_count; ++n) x[n] = std::clamp(x[n], lo, hi);
    std::sort(x, x + n_count);
    for (int n = 1; n < n_count; ++n) x[n] = std::max(x[n], x[n - 1] + delta);
    if (x[n_count - 1] > hi) {
      x[n_count - 1] = hi;
      for (int n = n_count - 2; n >= 0; --n) x[n] = std::min(x[n], x[n + 1] - delta);
    }
  }

  out.activation.resize(m_count);
  for (int m = 0; m < m_count; ++m)
    out.activation[m] = 1.0 / (1.0 + std::exp(-a.raw_segment_logits[m]));
  if (activation_override) {
    out.active = *activation_override;
    for (int m = 0; m < m_count; ++m) out.activation[m] = out.active[m] ? 1.0 : 0.0;
  } else {
    out.active.resize(m_count);
    for (int m = 0; m < m_count; ++m) out.active[m] = out.activation[m] >= 0.5 ? 1 : 0;
  }

  out.beam = BeamMatrix::zeros(cfg.user_count, m_count);
  for (int k = 0; k < cfg.user_count; ++k)
    for (int m = 0; m < m_count; ++m)
      out.beam.at(k, m) = {a.raw_beam[2 * (k * m_count + m)], a.raw_beam[2 * (k * m_count + m) + 1]};
  const double p = out.beam.power();
  if (p > cfg.total_power_w) {
    const double s = std::sqrt(cfg.total_power_w / p);
    for (cplx& c : out.beam.w) c *= s;
  }
  for (int m = 0; m < m_count; ++m)
    if (!out.active[m])
      for (int k = 0; k < cfg.user_count; ++k) out.beam.at(k, m) = {0.0, 0.0};
  return out;
}

/// Re-packs a projected action as a raw one (logits via the inverse logistic).
/// project_action of the result reproduces the projection exactly.
inline EnvAction as_raw_action(const Projected& p, const SystemConfig& cfg) {
  EnvAction a;
  a.raw_positions = p.layout.positions;
  a.raw_segment_logits.resize(p.activation.size());
  for (std::size_t m = 0; m < p.activation.size(); ++m) {
    const double v = std::clamp(p.activation[m], 1e-12, 1.0 - 1e-12);
    a.raw_segment_logits[m] = std::log(v / (1.0 - v));
  }
  a.raw_beam.resize(2 * p.beam.w.size());
  for (std::size_t i = 0; i < p.beam.w.size(); ++i) {
    a.raw_beam[2 * i] = p.beam.w[i].real();
    a.raw_beam[2 * i + 1] = p.beam.w[i].imag();
  }
  (void)cfg;
  return a;
}

struct HysteresisMemory {
  std::vector<std::uint8_t> last_activation;  // all segments active at episode start
  double p_update = 0.1;
};

/// One Bernoulli(p_update) draw per step, applied to the whole segment vector:
/// accept the new activation (and remember it) or retain the previous one.
/// `sampled`, if given, reports whether the draw accepted the new vector.
inline std::vector<std::uint8_t> hysteresis_gate(const std::vector<std::uint8_t>& new_activation,
                                                 HysteresisMemory& memory, std::mt19937_64& rng,
                                                 bool* sampled = nullptr) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < memory.p_update) {
    memory.last_activation = new_activation;
    if (sampled) *sampled = true;
    return new_activation;
  }
  if (sampled) *sampled = false;
  return memory.last_activation;
}

/// Per-coordinate mask over the flat action vector: 1 where the coordinate
/// influenced the executed transition, 0 where it could not have. Positions
/// and beam columns of segments that executed as inactive are zeroed, as are
/// the segment logits on steps where the activation was not re-sampled from
/// them (sticky-gate retention, frozen baselines, or protocols that force
/// all-on). Score-function gradient terms on such coordinates have zero
/// expectation — the reward cannot depend on them — and contribute only
/// variance, so updates may drop them without bias.
inline std::vector<double> action_effect_mask(const SystemConfig& cfg,
                                              const std::vector<std::uint8_t>& executed,
                                              bool logits_applied) {
  const int m_count = cfg.segment_count;
  const int n_count = cfg.antennas_per_segment;
  std::vector<double> mask(action_dim(cfg), 1.0);
  for (int m = 0; m < m_count; ++m) {
    if (!executed[m]) {
      for (int n = 0; n < n_count; ++n) mask[m * n_count + n] = 0.0;
      for (int k = 0; k < cfg.user_count; ++k) {
        const int b = m_count * n_count + m_count + 2 * (k * m_count + m);
        mask[b] = 0.0;
        mask[b + 1] = 0.0;
      }
    }
    if (!logits_applied) mask[m_count * n_count + m] = 0.0;
  }
  return mask;
}

/// Step reward: sum of user rates minus the count of under-illuminated targets.
inline double reward_value(const std::vector<double>& rates, const std::vector<double>& illuminations,
                           double threshold_w) {
  double r = 0;
  for (double v : rates) r += v;
  for (double g : illuminations)
    if (g < threshold_w) r -= 1.0;
  return r;
}

struct ActionBounds {
  std::vector<double> lo, hi;
};

inline ActionBounds action_bounds(const SystemConfig& cfg) {
  ActionBounds b;
  const double seg_len = cfg.segment_length();
  for (int m = 0; m < cfg.segment_count; ++m)
    for (int n = 0; n < cfg.antennas_per_segment; ++n) {
      b.lo.push_back(m * seg_len);
      b.hi.push_back((m + 1) * seg_len);
    }
  for (int m = 0; m < cfg.segment_count; ++m) {
    b.lo.push_back(-4.0);
    b.hi.push_back(4.0);
  }
  // Uniform draws over these bounds use the full power budget in expectation.
  const double beam_amp =
      std::sqrt(3.0 * cfg.total_power_w / (2.0 * cfg.user_count * cfg.segment_count));
  for (int i = 0; i < 2 * cfg.user_count * cfg.segment_count; ++i) {
    b.lo.push_back(-beam_amp);
    b.hi.push_back(beam_amp);
  }
  return b;
}

/// The canonical configuration the environment resets to, as a flat action:
/// uniformly spaced antennas, every segment activated, equal-power zero-phase
/// beams at the full budget.
inline std::vector<double> baseline_action(const SystemConfig& cfg) {
  std::vector<double> a;
  a.reserve(action_dim(cfg));
  const double seg_len = cfg.segment_length();
  for (int m = 0; m < cfg.segment_count; ++m)
    for (int n = 0; n < cfg.antennas_per_segment; ++n)
      a.push_back(m * seg_len + (n + 0.5) * seg_len / cfg.antennas_per_segment);
  for (int m = 0; m < cfg.segment_count; ++m) a.push_back(2.0);  // sigmoid(2) ~ 0.88: active
  const double amp = std::sqrt(cfg.total_power_w / (cfg.user_count * cfg.segment_count));
  for (int i = 0; i < cfg.user_count * cfg.segment_count; ++i) {
    a.push_back(amp);
    a.push_back(0.0);
  }
  return a;
}

/// Maps a policy-space action (unbounded, ~O(1) at initialization) into
/// physical units: an offset from the baseline configuration scaled by the
/// half-range of each dimension. Keeps a freshly initialized policy at a
/// feasible full-power starting point instead of a zero-power saddle.
/// Position dimensions are folded back into their segment span by reflection
/// rather than left for the projection to clamp: a clamped boundary is a
/// flat-reward region the policy gradient cannot escape, a reflected one
/// still slopes back toward the interior.
/// Position dimensions use a sub-wavelength scale (kPositionScale of the
/// span). The channel phase rotates through a full cycle when an antenna
/// moves one wavelength (~1 cm), so exploration noise spanning metres
/// re-randomizes every phase each step and no beam can stay matched to the
/// observed channels; with sub-millimetre steps the phases persist and the
/// policy can both exploit the channel state and fine-tune positions at the
/// scale where they actually shape the array phase.
inline constexpr double kPositionScale = 5e-5;

inline std::vector<double> scale_action(const std::vector<double>& raw, const SystemConfig& cfg) {
  const ActionBounds b = action_bounds(cfg);
  std::vector<double> out = baseline_action(cfg);
  if (raw.size() != out.size()) throw std::invalid_argument("scale_action: dimension mismatch");
  const std::size_t n_pos =
      static_cast<std::size_t>(cfg.segment_count) * cfg.antennas_per_segment;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double scale = i < n_pos ? kPositionScale : 0.5;
    out[i] += scale * (b.hi[i] - b.lo[i]) * raw[i];
    if (i < n_pos) {
      const double span = b.hi[i] - b.lo[i];
      double y = std::fmod(out[i] - b.lo[i], 2.0 * span);
      if (y < 0) y += 2.0 * span;
      out[i] = b.lo[i] + (y <= span ? y : 2.0 * span - y);
    }
  }
  return out;
}

/// Conjugate-pairing initialization for a linear state-to-action head
/// (action_dim x state_dim, row-major): each beam coordinate is seeded from
/// its own user-channel observation with w ~ coef * conj(g). The sum-rate
/// objective is phase-symmetric around the equal zero-phase reset beams, so
/// the expected policy gradient along any channel-matched map is exactly
/// zero there; seeding a small matched component turns that saddle into a
/// slope the optimizer can follow (and can equally well undo).
inline std::vector<double> conjugate_skip_init(const SystemConfig& cfg, int state_dim,
                                               double coef) {
  const int m_count = cfg.segment_count;
  const int n_beam0 = m_count * cfg.antennas_per_segment + m_count;
  std::vector<double> skip(static_cast<std::size_t>(action_dim(cfg)) * state_dim, 0.0);
  for (int k = 0; k < cfg.user_count; ++k)
    for (int m = 0; m < m_count; ++m) {
      const int pair = 2 * (k * m_count + m);  // user-gain block leads the state
      skip[static_cast<std::size_t>(n_beam0 + pair) * state_dim + pair] = coef;
      skip[static_cast<std::size_t>(n_beam0 + pair + 1) * state_dim + pair + 1] = -coef;
    }
  return skip;
}

/// The SWAN-ISAC MDP. One instance owns one RNG stream; scenarios are fixed
/// within an episode. PASS collapses the segmentation into a single guide of
/// the full length fed from x = 0, carrying all antennas on one RF chain.
class Environment {
 public:
  Environment(SystemConfig cfg, Protocol protocol, double p_update = 0.1, int episode_length = 50)
      : proto_(protocol), p_update_(p_update), episode_length_(episode_length) {
    cfg.validate();
    if (protocol == Protocol::PASS) {
      cfg.antennas_per_segment *= cfg.segment_count;
      cfg.segment_count = 1;
      cfg.validate();
    }
    cfg_ = cfg;
  }

  const SystemConfig& config() const { return cfg_; }
  Protocol protocol() const { return proto_; }
  int episode_length() const { return episode_length_; }

  int state_dim() const {
    const int m = cfg_.segment_count;
    return 2 * cfg_.user_count * m + 2 * cfg_.target_count * m + m * cfg_.antennas_per_segment + m;
  }
  int action_dim() const { return swan::action_dim(cfg_); }

  ActionBounds bounds() const { return action_bounds(cfg_); }

  /// Uniformly spaced antennas, all segments active, equal-power zero-phase
  /// beams at the full budget.
  std::vector<double> reset(const Scenario& scenario, std::uint64_t seed) {
    scenario_ = scenario;
    rng_.seed(seed);
    t_ = 0;
    const int m_count = cfg_.segment_count, n_count = cfg_.antennas_per_segment;
    const double seg_len = cfg_.segment_length();
    layout_ = {m_count, n_count, std::vector<double>(static_cast<std::size_t>(m_count) * n_count)};
    for (int m = 0; m < m_count; ++m)
      for (int n = 0; n < n_count; ++n)
        layout_.at(m, n) = m * seg_len + (n + 0.5) * seg_len / n_count;
    active_.assign(m_count, 1);
    memory_ = {active_, p_update_};
    beam_ = BeamMatrix::zeros(cfg_.user_count, m_count);
    const double amp = std::sqrt(cfg_.total_power_w / (cfg_.user_count * m_count));
    for (cplx& c : beam_.w) c = {amp, 0.0};
    recompute_channels();
    return observe();
  }

  struct StepResult {
    std::vector<double> state;
    double reward = 0;
    MetricReport report;
    bool done = false;
    std::vector<std::uint8_t> executed_activation;
    /// True when this step's activation was re-sampled from the raw logits
    /// (gate accepted); false under retention, freezing, or forced all-on.
    bool logits_applied = false;
  };

  /// `freeze_segments` keeps the previous activation regardless of the action
  /// (used by the fixed-period baseline).
  StepResult step(const EnvAction& action, bool freeze_segments = false) {
    if (t_ >= episode_length_) throw std::logic_error("step: episode already terminal");
    std::vector<std::uint8_t> executed;
    bool logits_applied = false;
    switch (proto_) {
      case Protocol::SM:
      case Protocol::PASS:
        executed.assign(cfg_.segment_count, 1);
        break;
      case Protocol::HSSM: {
        std::vector<std::uint8_t> desired(cfg_.segment_count);
        for (int m = 0; m < cfg_.segment_count; ++m)
          desired[m] = 1.0 / (1.0 + std::exp(-action.raw_segment_logits[m])) >= 0.5 ? 1 : 0;
        if (freeze_segments)
          executed = memory_.last_activation;
        else
          executed = hysteresis_gate(desired, memory_, rng_, &logits_applied);
        break;
      }
    }
    Projected proj = project_action(action, cfg_, &executed);
    layout_ = proj.layout;
    active_ = proj.active;
    beam_ = proj.beam;
    recompute_channels();

    StepResult res;
    std::vector<double> act01(active_.begin(), active_.end());
    res.report = evaluate_metrics(user_gains_, target_gains_, layout_, beam_, act01, cfg_);
    res.reward = reward_value(res.report.per_user_rate, res.report.per_target_illumination,
                              cfg_.sensing_threshold_w);
    ++t_;
    res.done = t_ >= episode_length_;
    res.state = observe();
    return res;
  }

  const AntennaLayout& layout() const { return layout_; }
  const BeamMatrix& beam() const { return beam_; }
  const std::vector<std::uint8_t>& activation() const { return active_; }
  const Scenario& scenario() const { return scenario_; }
  const GainMatrix& user_gains() const { return user_gains_; }
  const GainMatrix& target_gains() const { return target_gains_; }

 private:
  void recompute_channels() {
    user_gains_ = effective_channels(layout_, scenario_.user_positions, active_, cfg_);
    target_gains_ = effective_channels(layout_, scenario_.target_positions, active_, cfg_);
  }

  std::vector<double> observe() const {
    std::vector<double> s;
    s.reserve(state_dim());
    for (const cplx& c : user_gains_.g) {
      s.push_back(c.real());
      s.push_back(c.imag());
    }
    for (const cplx& c : target_gains_.g) {
      s.push_back(c.real());
      s.push_back(c.imag());
    }
    s.insert(s.end(), layout_.positions.begin(), layout_.positions.end());
    for (std::uint8_t a : active_) s.push_back(static_cast<double>(a));
    return s;
  }

  SystemConfig cfg_;
  Protocol proto_;
  double p_update_;
  int episode_length_;
  Scenario scenario_;
  std::mt19937_64 rng_;
  HysteresisMemory memory_;
  AntennaLayout layout_;
  std::vector<std::uint8_t> active_;
  BeamMatrix beam_;
  GainMatrix user_gains_, target_gains_;
  int t_ = 0;
};

}  // namespace swan
