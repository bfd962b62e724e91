#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swan/env.hpp"
#include "swan/neural.hpp"

namespace swan {

enum class Algo { SHRL, SPRL, A2C, PPO, Random };

inline const char* to_string(Algo a) {
  switch (a) {
    case Algo::SHRL: return "SHRL";
    case Algo::SPRL: return "SPRL";
    case Algo::A2C: return "A2C";
    case Algo::PPO: return "PPO";
    default: return "Random";
  }
}

inline Algo algo_from_string(const std::string& s) {
  if (s == "SHRL") return Algo::SHRL;
  if (s == "SPRL") return Algo::SPRL;
  if (s == "A2C") return Algo::A2C;
  if (s == "PPO") return Algo::PPO;
  if (s == "Random") return Algo::Random;
  throw std::invalid_argument("unknown algorithm: " + s);
}

struct AgentConfig {
  Algo algo = Algo::SHRL;
  double p_update = 0.1;
  int sprl_period = 5;
  double ppo_clip = 0.2;
  int ppo_epochs = 4;
  int ppo_batch_episodes = 8;
  double entropy_coef = 1e-3;
  double discount = 0.99;
  // Learning rate for the actor MLP trunk and log_std. Deliberately small:
  // on freshly drawn scenarios the trunk's per-parameter gradient is
  // noise-dominated, and under Adam a noise-dominated head random-walks away
  // from its initialization at a rate set purely by its learning rate. At
  // 3e-4 that drift destroys a trained policy within ~500 episodes
  // (measured); at 3e-5 the trunk still adapts but the drift stays below the
  // useful signal.
  double actor_lr = 3e-5;
  double critic_lr = 1e-3;
  int hidden = 256;
  bool normalize_advantages = true;
  double log_std_init = -1.0;  // initial exploration scale exp(-1) ~ 0.37
  // Generalized-advantage-estimation mixing factor. 0 credits each action
  // with its one-step TD residual only; 1 recovers the full Monte Carlo
  // return minus the value baseline.
  double gae_lambda = 0.0;
  // Global-norm gradient clip applied to each network's gradient before its
  // Adam step; <= 0 disables. Large-return outliers otherwise destabilize
  // both heads and collapse a partially trained policy.
  double max_grad_norm = 0.5;
  // Hinge penalty on policy mean outputs beyond kActionRegMargin. The
  // environment projection renormalizes over-budget beams, so reward is flat
  // along the radial direction of the action space; without a restoring
  // force the mean random-walks outward until exploration noise is
  // relatively negligible and the gradient signal dies. A hinge leaves the
  // useful |mu| region inside the margin untouched and is strong enough past
  // it to register through Adam's per-coordinate normalization.
  double action_reg = 1.0;
  // Samples per gradient step. Averaging adjacent steps before each Adam
  // update trades update count for gradient quality; single-sample updates
  // make the networks chase each episode's scenario and forget the rest.
  int minibatch = 10;
  // Initial coefficient on the fixed conjugate-pairing policy basis (see
  // conjugate_skip_init); <= 0 disables the basis entirely. The reward is
  // phase-symmetric around the reset beams, so the expected gradient along
  // every channel-matched linear map vanishes there and first-order training
  // cannot discover matched beamforming from a symmetric start within a
  // desk-scale budget; the seed breaks the symmetry and leaves its magnitude
  // to the optimizer. Tying the whole direction to one trained scalar (rather
  // than seeding the dense skip entries) pools the gradient over every tied
  // weight, which raises its signal-to-noise enough to actually move.
  double matched_gain_init = 0.25;
  // Learning rate for that scalar. A single coefficient driven by a pooled,
  // sign-consistent gradient tolerates a much larger step than the dense
  // heads, and at the dense heads' rate it would take ~1e5 episodes to grow.
  double matched_gain_lr = 1e-2;
  // Learning rate for the dense linear skip head; negative means "use
  // actor_lr", 0 freezes the skip. Kept separate because the skip's
  // per-entry gradient signal-to-noise is far below the tied scalar's, and
  // under Adam a head whose gradients are noise-dominated random-walks away
  // from zero at a rate set only by its learning rate.
  double skip_lr = 0.0;
  // Winsorization bound on normalized advantages, in standard deviations;
  // <= 0 disables. Rare segment-activation transitions produce returns many
  // sigma from the episode mean, and through the score function a single such
  // step injects sign noise into every policy head. Clamping bounds each
  // step's influence while leaving the bulk of the advantage distribution
  // untouched.
  double adv_clip = 3.0;

  void validate() const {
    if (sprl_period < 1) throw std::invalid_argument("sprl_period must be >= 1");
    if (!(ppo_clip > 0 && ppo_clip < 1)) throw std::invalid_argument("ppo_clip must be in (0,1)");
    if (!(p_update > 0 && p_update <= 1)) throw std::invalid_argument("p_update must be in (0,1]");
    if (log_std_init < kLogStdMin || log_std_init > kLogStdMax)
      throw std::invalid_argument("log_std_init out of the clamp range");
    if (!(gae_lambda >= 0 && gae_lambda <= 1))
      throw std::invalid_argument("gae_lambda must be in [0,1]");
    if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
    if (action_reg < 0) throw std::invalid_argument("action_reg must be >= 0");
    if (matched_gain_lr < 0) throw std::invalid_argument("matched_gain_lr must be >= 0");
  }
};

/// True on the steps where the fixed-period baseline refreshes its segment
/// selection; in between the previous activation is retained.
inline bool sprl_gate(int step_index, int period) {
  if (period < 1) throw std::invalid_argument("sprl_gate: period must be >= 1");
  return step_index % period == 0;
}

/// Uniform draw per dimension within the given bounds.
inline std::vector<double> random_act(const ActionBounds& bounds, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> a(bounds.lo.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = bounds.lo[i] + (bounds.hi[i] - bounds.lo[i]) * unit(rng);
  return a;
}

/// Running mean/variance used to whiten observations. Updated during
/// training, frozen at evaluation.
struct ObsNormalizer {
  std::int64_t count = 0;
  std::vector<double> mean, m2;

  void update(const std::vector<double>& x) {
    if (mean.empty()) {
      mean.assign(x.size(), 0.0);
      m2.assign(x.size(), 0.0);
    }
    ++count;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(count);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  std::vector<double> normalize(const std::vector<double>& x) const {
    if (count == 0) return x;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = (x[i] - mean[i]) / std::sqrt(m2[i] / static_cast<double>(count) + 1e-8);
    return y;
  }
};

/// One episode of experience, with discounted Monte Carlo returns and
/// generalized-advantage estimates computed post hoc.
struct Trajectory {
  std::vector<std::vector<double>> states;  // normalized observations
  std::vector<std::vector<double>> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> returns;
  std::vector<double> advantages;

  /// Fills `returns` with discounted Monte Carlo returns (the critic target)
  /// and `advantages` with GAE(lambda) over the stored value estimates. The
  /// episode is a fixed finite horizon, so the bootstrap value past the last
  /// step is zero. lambda = 1 recovers returns[t] - values[t] exactly.
  void compute_returns(double gamma, double lambda = 1.0) {
    const std::size_t n = rewards.size();
    returns.assign(n, 0.0);
    double acc = 0;
    for (int t = static_cast<int>(n) - 1; t >= 0; --t) {
      acc = rewards[t] + gamma * acc;
      returns[t] = acc;
    }
    advantages.assign(n, 0.0);
    double gae = 0;
    for (int t = static_cast<int>(n) - 1; t >= 0; --t) {
      const double next_v = (t + 1 < static_cast<int>(n)) ? values[t + 1] : 0.0;
      const double delta = rewards[t] + gamma * next_v - values[t];
      gae = delta + gamma * lambda * gae;
      advantages[t] = gae;
    }
  }
};

struct Agent {
  AgentConfig cfg;
  GaussianPolicy actor;
  MlpSpec critic_spec;
  std::vector<double> critic_params;
  AdamState actor_adam, skip_adam, basis_adam, log_std_adam, critic_adam;
  ObsNormalizer norm;

  static Agent make(const AgentConfig& cfg, int state_dim, int action_dim, std::mt19937_64& rng) {
    Agent ag;
    ag.cfg = cfg;
    ag.actor = GaussianPolicy::make(state_dim, action_dim, cfg.hidden, rng, cfg.log_std_init);
    // The critic also sees the episode-time fraction: Monte Carlo returns on a
    // fixed horizon depend strongly on time-to-go, which the physical state
    // does not encode.
    ag.critic_spec.sizes = {state_dim + 1, cfg.hidden, cfg.hidden, 1};
    ag.critic_params.resize(ag.critic_spec.param_count());
    mlp_init(ag.critic_spec, ag.critic_params, rng);
    ag.actor_adam = AdamState(ag.actor.params.size());
    ag.skip_adam = AdamState(ag.actor.skip.size());
    ag.basis_adam = AdamState(1);
    ag.log_std_adam = AdamState(ag.actor.log_std.size());
    ag.critic_adam = AdamState(ag.critic_params.size());
    return ag;
  }

  double value(const std::vector<double>& state, double time_frac = 0.0,
               MlpCache* cache = nullptr) const {
    std::vector<double> in = state;
    in.push_back(time_frac);
    return mlp_forward(critic_spec, critic_params, in, cache)[0];
  }
};

namespace detail {

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`;
/// no-op when max_norm <= 0 or the norm is already within bounds.
inline void clip_grad_norm(std::vector<double>& grad, double max_norm) {
  if (max_norm <= 0) return;
  double n2 = 0;
  for (double g : grad) n2 += g * g;
  const double n = std::sqrt(n2);
  if (n <= max_norm) return;
  const double s = max_norm / n;
  for (double& g : grad) g *= s;
}

inline std::vector<double> effective_advantages(const std::vector<double>& adv, bool normalize,
                                                double clip = 0.0) {
  if (!normalize || adv.size() < 2) return adv;
  double mean = 0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double sd = std::sqrt(var);
  if (sd < 1e-12) return adv;
  std::vector<double> out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) {
    out[i] = (adv[i] - mean) / sd;
    if (clip > 0) out[i] = std::clamp(out[i], -clip, clip);
  }
  return out;
}

}  // namespace detail

struct UpdateLosses {
  double policy_loss = 0;
  double value_loss = 0;
};

/// Margin of the hinge penalty on policy mean outputs (see
/// AgentConfig::action_reg). Wide enough for channel-matched beam outputs,
/// which need several normalized units on strong-channel coordinates, while
/// still stopping the unbounded radial drift the penalty exists for.
inline constexpr double kActionRegMargin = 4.0;

namespace detail {

/// Loss gradient of the hinge penalty action_reg * max(0, |m| - margin)^2.
inline double action_reg_grad(double m, double coef) {
  const double excess = std::abs(m) - kActionRegMargin;
  if (excess <= 0 || coef <= 0) return 0.0;
  return 2.0 * coef * excess * (m > 0 ? 1.0 : -1.0);
}

}  // namespace detail

/// One pass of minibatched actor-critic updates over a completed episode:
/// contiguous blocks of cfg.minibatch steps share one averaged Adam step per
/// network. The critic descends squared value error against the Monte Carlo
/// returns; the actor descends -log_prob * advantage - entropy_coef *
/// entropy plus the action-mean hinge penalty, with advantages treated as
/// constants. Losses reported are per-sample means, each evaluated just
/// before its own update.
inline UpdateLosses a2c_update(const Trajectory& traj, Agent& agent) {
  const std::size_t steps = traj.states.size();
  if (steps == 0) return {};
  const double inv_t = 1.0 / static_cast<double>(steps);
  const std::vector<double> adv =
      detail::effective_advantages(traj.advantages, agent.cfg.normalize_advantages,
                                   agent.cfg.adv_clip);

  UpdateLosses losses;
  losses.policy_loss = -agent.cfg.entropy_coef * agent.actor.entropy();
  std::vector<double> critic_grad(agent.critic_params.size());
  std::vector<double> actor_grad(agent.actor.params.size());
  std::vector<double> skip_grad(agent.actor.skip.size());
  std::vector<double> basis_grad(1);
  std::vector<double> log_std_grad(agent.actor.log_std.size());

  const std::size_t mb = static_cast<std::size_t>(agent.cfg.minibatch);
  for (std::size_t start = 0; start < steps; start += mb) {
    const std::size_t end = std::min(steps, start + mb);
    const double inv_b = 1.0 / static_cast<double>(end - start);
    std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
    std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
    std::fill(skip_grad.begin(), skip_grad.end(), 0.0);
    basis_grad[0] = 0.0;
    std::fill(log_std_grad.begin(), log_std_grad.end(), 0.0);

    for (std::size_t t = start; t < end; ++t) {
      MlpCache vc;
      const double v =
          agent.value(traj.states[t], static_cast<double>(t) / static_cast<double>(steps), &vc);
      const double err = v - traj.returns[t];
      losses.value_loss += err * err * inv_t;
      const double dv[1] = {2.0 * err * inv_b};
      mlp_backward(agent.critic_spec, agent.critic_params, vc, dv, critic_grad);

      MlpCache ac;
      const std::vector<double> mu = agent.actor.mean(traj.states[t], &ac);
      const double lp = gaussian_log_prob(mu, agent.actor.log_std, traj.actions[t]);
      losses.policy_loss += -lp * adv[t] * inv_t;
      std::vector<double> dmu(mu.size());
      for (std::size_t i = 0; i < mu.size(); ++i) {
        const double var = std::exp(2.0 * agent.actor.log_std[i]);
        const double z2 = (traj.actions[t][i] - mu[i]) * (traj.actions[t][i] - mu[i]) / var;
        dmu[i] = (-adv[t] * (traj.actions[t][i] - mu[i]) / var +
                  detail::action_reg_grad(mu[i], agent.cfg.action_reg)) *
                 inv_b;
        log_std_grad[i] += (-adv[t] * (z2 - 1.0) - agent.cfg.entropy_coef) * inv_b;
      }
      mlp_backward(agent.actor.spec, agent.actor.params, ac, dmu, actor_grad);
      agent.actor.skip_backward(traj.states[t], dmu, skip_grad);
      basis_grad[0] += agent.actor.basis_backward(traj.states[t], dmu);
    }

    detail::clip_grad_norm(critic_grad, agent.cfg.max_grad_norm);
    detail::clip_grad_norm(actor_grad, agent.cfg.max_grad_norm);
    detail::clip_grad_norm(skip_grad, agent.cfg.max_grad_norm);
    detail::clip_grad_norm(basis_grad, agent.cfg.max_grad_norm);
    detail::clip_grad_norm(log_std_grad, agent.cfg.max_grad_norm);
    adam_step(agent.critic_params, critic_grad, agent.critic_adam, agent.cfg.critic_lr);
    adam_step(agent.actor.params, actor_grad, agent.actor_adam, agent.cfg.actor_lr);
    const double skip_lr = agent.cfg.skip_lr < 0 ? agent.cfg.actor_lr : agent.cfg.skip_lr;
    if (skip_lr > 0) adam_step(agent.actor.skip, skip_grad, agent.skip_adam, skip_lr);
    adam_step({&agent.actor.basis_gain, 1}, basis_grad, agent.basis_adam,
              agent.cfg.matched_gain_lr);
    adam_step(agent.actor.log_std, log_std_grad, agent.log_std_adam, agent.cfg.actor_lr);
    agent.actor.clamp_log_std();
  }
  return losses;
}

/// Clipped-surrogate update over a batch of trajectories; `log_probs` must
/// hold the behavior policy's values from collection time. Runs
/// cfg.ppo_epochs passes; the critic is fitted to the returns alongside.
inline UpdateLosses ppo_update(const std::vector<Trajectory>& batch, Agent& agent) {
  std::size_t total = 0;
  for (const Trajectory& tr : batch) total += tr.states.size();
  if (total == 0) return {};
  const double inv_t = 1.0 / static_cast<double>(total);
  const double eps = agent.cfg.ppo_clip;

  std::vector<double> all_adv;
  all_adv.reserve(total);
  for (const Trajectory& tr : batch)
    all_adv.insert(all_adv.end(), tr.advantages.begin(), tr.advantages.end());
  all_adv = detail::effective_advantages(all_adv, agent.cfg.normalize_advantages,
                                         agent.cfg.adv_clip);

  // Flatten (trajectory, step) pairs so epochs can sweep the batch in
  // contiguous minibatches.
  struct Sample {
    const Trajectory* tr;
    std::size_t t;
  };
  std::vector<Sample> samples;
  samples.reserve(total);
  for (const Trajectory& tr : batch)
    for (std::size_t t = 0; t < tr.states.size(); ++t) samples.push_back({&tr, t});

  UpdateLosses losses;
  std::vector<double> critic_grad(agent.critic_params.size());
  std::vector<double> actor_grad(agent.actor.params.size());
  std::vector<double> skip_grad(agent.actor.skip.size());
  std::vector<double> basis_grad(1);
  std::vector<double> log_std_grad(agent.actor.log_std.size());
  const std::size_t mb = static_cast<std::size_t>(agent.cfg.minibatch);
  for (int epoch = 0; epoch < agent.cfg.ppo_epochs; ++epoch) {
    losses = {};
    losses.policy_loss = -agent.cfg.entropy_coef * agent.actor.entropy();
    for (std::size_t start = 0; start < samples.size(); start += mb) {
      const std::size_t end = std::min(samples.size(), start + mb);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
      std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
      std::fill(skip_grad.begin(), skip_grad.end(), 0.0);
      basis_grad[0] = 0.0;
      std::fill(log_std_grad.begin(), log_std_grad.end(), 0.0);

      for (std::size_t idx = start; idx < end; ++idx) {
        const Trajectory& tr = *samples[idx].tr;
        const std::size_t t = samples[idx].t;
        MlpCache vc;
        const double v = agent.value(
            tr.states[t], static_cast<double>(t) / static_cast<double>(tr.states.size()), &vc);
        const double err = v - tr.returns[t];
        losses.value_loss += err * err * inv_t;
        const double dv[1] = {2.0 * err * inv_b};
        mlp_backward(agent.critic_spec, agent.critic_params, vc, dv, critic_grad);

        MlpCache ac;
        const std::vector<double> mu = agent.actor.mean(tr.states[t], &ac);
        const double lp = gaussian_log_prob(mu, agent.actor.log_std, tr.actions[t]);
        const double ratio = std::exp(lp - tr.log_probs[t]);
        const double a = all_adv[idx];
        const double unclipped = ratio * a;
        const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a;
        losses.policy_loss += -std::min(unclipped, clipped) * inv_t;
        // Gradient flows only through the selected, unsaturated branch.
        const double dobj_dlp = unclipped <= clipped ? unclipped : 0.0;
        std::vector<double> dmu(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) {
          const double var = std::exp(2.0 * agent.actor.log_std[i]);
          const double z2 = (tr.actions[t][i] - mu[i]) * (tr.actions[t][i] - mu[i]) / var;
          dmu[i] = (-dobj_dlp * (tr.actions[t][i] - mu[i]) / var +
                    detail::action_reg_grad(mu[i], agent.cfg.action_reg)) *
                   inv_b;
          log_std_grad[i] += (-dobj_dlp * (z2 - 1.0) - agent.cfg.entropy_coef) * inv_b;
        }
        mlp_backward(agent.actor.spec, agent.actor.params, ac, dmu, actor_grad);
        agent.actor.skip_backward(tr.states[t], dmu, skip_grad);
        basis_grad[0] += agent.actor.basis_backward(tr.states[t], dmu);
      }

      detail::clip_grad_norm(critic_grad, agent.cfg.max_grad_norm);
      detail::clip_grad_norm(actor_grad, agent.cfg.max_grad_norm);
      detail::clip_grad_norm(skip_grad, agent.cfg.max_grad_norm);
      detail::clip_grad_norm(basis_grad, agent.cfg.max_grad_norm);
      detail::clip_grad_norm(log_std_grad, agent.cfg.max_grad_norm);
      adam_step(agent.critic_params, critic_grad, agent.critic_adam, agent.cfg.critic_lr);
      adam_step(agent.actor.params, actor_grad, agent.actor_adam, agent.cfg.actor_lr);
      const double skip_lr = agent.cfg.skip_lr < 0 ? agent.cfg.actor_lr : agent.cfg.skip_lr;
      if (skip_lr > 0) adam_step(agent.actor.skip, skip_grad, agent.skip_adam, skip_lr);
      adam_step({&agent.actor.basis_gain, 1}, basis_grad, agent.basis_adam,
                agent.cfg.matched_gain_lr);
      adam_step(agent.actor.log_std, log_std_grad, agent.log_std_adam, agent.cfg.actor_lr);
      agent.actor.clamp_log_std();
    }
  }
  return losses;
}

struct TrainResult {
  std::vector<double> curve;  // per-episode mean step reward
  Agent agent;
  bool diverged = false;
  int diverged_episode = -1;
};

inline double env_p_update(const AgentConfig& cfg) {
  // Only SHRL runs a sticky gate; everything else sees a transparent one.
  return cfg.algo == Algo::SHRL ? cfg.p_update : 1.0;
}

/// The shared episode loop: sample, step, compute Monte Carlo returns,
/// update (per episode for the actor-critic family, per batch for PPO).
inline TrainResult train(const SystemConfig& sys, Protocol proto, ScenarioKind kind,
                         const AgentConfig& acfg, int episodes, int episode_length,
                         std::uint64_t seed) {
  acfg.validate();
  Environment env(sys, proto, env_p_update(acfg), episode_length);
  std::mt19937_64 master(seed);
  std::mt19937_64 action_rng(master());
  const std::uint64_t env_seed_base = master();
  const std::uint64_t scen_seed_base = master();

  TrainResult res;
  std::mt19937_64 init_rng(master());
  res.agent = Agent::make(acfg, env.state_dim(), env.action_dim(), init_rng);
  if (acfg.matched_gain_init > 0) {
    res.agent.actor.basis = conjugate_skip_init(env.config(), env.state_dim(), 1.0);
    res.agent.actor.basis_gain = acfg.matched_gain_init;
  }
  Agent& agent = res.agent;
  const ActionBounds bounds = env.bounds();

  std::vector<Trajectory> batch;
  for (int ep = 0; ep < episodes; ++ep) {
    const Scenario scn = make_scenario(kind, env.config(), scen_seed_base + ep);
    std::vector<double> state = env.reset(scn, env_seed_base + ep);

    Trajectory traj;
    double reward_sum = 0;
    for (int t = 0; t < episode_length; ++t) {
      agent.norm.update(state);
      const std::vector<double> obs = agent.norm.normalize(state);
      std::vector<double> flat;
      double lp = 0, v = 0;
      if (acfg.algo == Algo::Random) {
        flat = random_act(bounds, action_rng);
      } else {
        const std::vector<double> mu = agent.actor.mean(obs);
        flat = agent.actor.sample(mu, action_rng);
        lp = gaussian_log_prob(mu, agent.actor.log_std, flat);
        v = agent.value(obs, static_cast<double>(t) / episode_length);
      }
      const bool freeze = acfg.algo == Algo::SPRL && !sprl_gate(t, acfg.sprl_period);
      // The policy acts in a normalized space; Random draws physical units.
      const std::vector<double> phys =
          acfg.algo == Algo::Random ? flat : scale_action(flat, env.config());
      auto sr = env.step(unpack_action(phys, env.config()), freeze);
      reward_sum += sr.reward;
      traj.states.push_back(obs);
      traj.actions.push_back(std::move(flat));
      traj.log_probs.push_back(lp);
      traj.rewards.push_back(sr.reward);
      traj.values.push_back(v);
      state = std::move(sr.state);
    }
    res.curve.push_back(reward_sum / episode_length);

    if (acfg.algo == Algo::Random) continue;
    traj.compute_returns(acfg.discount, acfg.gae_lambda);
    UpdateLosses losses;
    bool updated = false;
    if (acfg.algo == Algo::PPO) {
      batch.push_back(std::move(traj));
      if (static_cast<int>(batch.size()) == acfg.ppo_batch_episodes || ep + 1 == episodes) {
        losses = ppo_update(batch, agent);
        batch.clear();
        updated = true;
      }
    } else {
      losses = a2c_update(traj, agent);
      updated = true;
    }
    if (updated && (!std::isfinite(losses.policy_loss) || !std::isfinite(losses.value_loss))) {
      res.diverged = true;
      res.diverged_episode = ep;
      break;
    }
  }
  return res;
}

struct EvalResult {
  double mean_sum_rate = 0;      // bits/s/Hz at unit bandwidth
  double mean_illumination = 0;  // W, averaged over targets
  double mean_reward = 0;
};

/// Deterministic (mean-action) evaluation over freshly drawn scenarios; the
/// observation normalizer is frozen. Optionally writes the first episode's
/// trace as CSV rows: step, reward, sum_rate, min_illumination, mask.
inline EvalResult evaluate(const SystemConfig& sys, Protocol proto, ScenarioKind kind,
                           const Agent& agent, int episodes, int episode_length,
                           std::uint64_t seed, std::ostream* trace = nullptr) {
  Environment env(sys, proto, env_p_update(agent.cfg), episode_length);
  std::mt19937_64 master(seed);
  std::mt19937_64 action_rng(master());
  const std::uint64_t env_seed_base = master();
  const std::uint64_t scen_seed_base = master();
  const ActionBounds bounds = env.bounds();

  if (trace) *trace << "step,reward,sum_rate,min_illumination,active_segment_mask\n";
  EvalResult out;
  for (int ep = 0; ep < episodes; ++ep) {
    const Scenario scn = make_scenario(kind, env.config(), scen_seed_base + ep);
    std::vector<double> state = env.reset(scn, env_seed_base + ep);
    for (int t = 0; t < episode_length; ++t) {
      std::vector<double> flat;
      if (agent.cfg.algo == Algo::Random)
        flat = random_act(bounds, action_rng);
      else
        flat = agent.actor.mean(agent.norm.normalize(state));
      const bool freeze = agent.cfg.algo == Algo::SPRL && !sprl_gate(t, agent.cfg.sprl_period);
      const std::vector<double> phys =
          agent.cfg.algo == Algo::Random ? flat : scale_action(flat, env.config());
      auto sr = env.step(unpack_action(phys, env.config()), freeze);
      out.mean_sum_rate += sr.report.sum_rate;
      double min_ill = std::numeric_limits<double>::infinity(), ill_sum = 0;
      for (double g : sr.report.per_target_illumination) {
        min_ill = std::min(min_ill, g);
        ill_sum += g;
      }
      if (!sr.report.per_target_illumination.empty())
        out.mean_illumination += ill_sum / sr.report.per_target_illumination.size();
      out.mean_reward += sr.reward;
      if (trace && ep == 0) {
        std::string mask;
        for (std::uint8_t a : env.activation()) mask += a ? '1' : '0';
        *trace << t << ',' << sr.reward << ',' << sr.report.sum_rate << ','
               << (std::isfinite(min_ill) ? min_ill : 0.0) << ',' << mask << '\n';
      }
      state = std::move(sr.state);
    }
  }
  const double n = static_cast<double>(episodes) * episode_length;
  out.mean_sum_rate /= n;
  out.mean_illumination /= n;
  out.mean_reward /= n;
  return out;
}

// ---- checkpointing ------------------------------------------------------

namespace detail {

inline void write_vec(std::ostream& os, const std::vector<double>& v) {
  os << v.size();
  os << std::hexfloat;
  for (double x : v) os << ' ' << x;
  os << std::defaultfloat << '\n';
}

inline std::vector<double> read_vec(std::istream& is) {
  std::size_t n;
  if (!(is >> n)) throw std::runtime_error("checkpoint: truncated");
  std::vector<double> v(n);
  for (double& x : v) {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated");
    x = std::strtod(tok.c_str(), nullptr);
  }
  return v;
}

}  // namespace detail

/// Plain-text checkpoint; hexfloat encoding makes the round trip bit-exact.
inline void save_checkpoint(std::ostream& os, const Agent& agent) {
  os << "swan-checkpoint 3\n";
  os << to_string(agent.cfg.algo) << ' ' << agent.cfg.hidden << '\n';
  os << agent.actor.spec.sizes.size();
  for (int s : agent.actor.spec.sizes) os << ' ' << s;
  os << '\n';
  detail::write_vec(os, agent.actor.params);
  detail::write_vec(os, agent.actor.skip);
  detail::write_vec(os, agent.actor.basis);
  os << std::hexfloat << agent.actor.basis_gain << std::defaultfloat << '\n';
  detail::write_vec(os, agent.actor.log_std);
  os << agent.critic_spec.sizes.size();
  for (int s : agent.critic_spec.sizes) os << ' ' << s;
  os << '\n';
  detail::write_vec(os, agent.critic_params);
  os << agent.actor_adam.t << ' ' << agent.skip_adam.t << ' ' << agent.basis_adam.t << ' '
     << agent.log_std_adam.t << ' ' << agent.critic_adam.t << '\n';
  detail::write_vec(os, agent.actor_adam.m);
  detail::write_vec(os, agent.actor_adam.v);
  detail::write_vec(os, agent.skip_adam.m);
  detail::write_vec(os, agent.skip_adam.v);
  detail::write_vec(os, agent.basis_adam.m);
  detail::write_vec(os, agent.basis_adam.v);
  detail::write_vec(os, agent.log_std_adam.m);
  detail::write_vec(os, agent.log_std_adam.v);
  detail::write_vec(os, agent.critic_adam.m);
  detail::write_vec(os, agent.critic_adam.v);
  os << agent.norm.count << '\n';
  detail::write_vec(os, agent.norm.mean);
  detail::write_vec(os, agent.norm.m2);
}

inline void load_checkpoint(std::istream& is, Agent& agent) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "swan-checkpoint" || version != "3")
    throw std::runtime_error("checkpoint: bad header");
  std::string algo;
  is >> algo >> agent.cfg.hidden;
  agent.cfg.algo = algo_from_string(algo);
  std::size_t n;
  is >> n;
  agent.actor.spec.sizes.resize(n);
  for (int& s : agent.actor.spec.sizes) is >> s;
  agent.actor.params = detail::read_vec(is);
  agent.actor.skip = detail::read_vec(is);
  agent.actor.basis = detail::read_vec(is);
  {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated");
    agent.actor.basis_gain = std::strtod(tok.c_str(), nullptr);
  }
  agent.actor.log_std = detail::read_vec(is);
  is >> n;
  agent.critic_spec.sizes.resize(n);
  for (int& s : agent.critic_spec.sizes) is >> s;
  agent.critic_params = detail::read_vec(is);
  is >> agent.actor_adam.t >> agent.skip_adam.t >> agent.basis_adam.t >> agent.log_std_adam.t >>
      agent.critic_adam.t;
  agent.actor_adam.m = detail::read_vec(is);
  agent.actor_adam.v = detail::read_vec(is);
  agent.skip_adam.m = detail::read_vec(is);
  agent.skip_adam.v = detail::read_vec(is);
  agent.basis_adam.m = detail::read_vec(is);
  agent.basis_adam.v = detail::read_vec(is);
  agent.log_std_adam.m = detail::read_vec(is);
  agent.log_std_adam.v = detail::read_vec(is);
  agent.critic_adam.m = detail::read_vec(is);
  agent.critic_adam.v = detail::read_vec(is);
  is >> agent.norm.count;
  agent.norm.mean = detail::read_vec(is);
  agent.norm.m2 = detail::read_vec(is);
  if (!is) throw std::runtime_error("checkpoint: truncated");
}

inline void save_checkpoint(const std::string& path, const Agent& agent) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  save_checkpoint(os, agent);
}

inline Agent load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  Agent agent;
  load_checkpoint(is, agent);
  return agent;
}

}  // namespace swan
