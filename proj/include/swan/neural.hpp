#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace swan {

/// Layer sizes of a tanh MLP with a linear output layer. Parameters live in
/// one flat vector, per layer: weight matrix (out x in, row-major) then bias.
struct MlpSpec {
  std::vector<int> sizes;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int layer_count() const { return static_cast<int>(sizes.size()) - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layer_count(); ++l)
      n += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
    return n;
  }
};

/// Per-layer activations cached by forward for use in backward.
/// act[0] is the input; act[l+1] the output of layer l (post-tanh on hidden).
struct MlpCache {
  std::vector<std::vector<double>> act;
};

inline std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                       std::span<const double> input, MlpCache* cache = nullptr) {
  if (static_cast<int>(input.size()) != spec.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  std::vector<double> x(input.begin(), input.end());
  if (cache) cache->act.assign(1, x);
  std::size_t off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.sizes[l], out = spec.sizes[l + 1];
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
      const double* w = params.data() + off + static_cast<std::size_t>(o) * in;
      double acc = params[off + static_cast<std::size_t>(out) * in + o];
      for (int i = 0; i < in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
    if (l + 1 < spec.layer_count())
      for (double& v : y) v = std::tanh(v);
    x = std::move(y);
    if (cache) cache->act.push_back(x);
    off += static_cast<std::size_t>(out) * in + out;
  }
  return x;
}

/// Accumulates exact parameter gradients into `grads` given the gradient of
/// the loss with respect to the network output. Returns the input gradient.
inline std::vector<double> mlp_backward(const MlpSpec& spec, std::span<const double> params,
                                        const MlpCache& cache, std::span<const double> output_grad,
                                        std::span<double> grads) {
  std::vector<double> d(output_grad.begin(), output_grad.end());
  // Layer parameter offsets.
  std::vector<std::size_t> offs(spec.layer_count());
  std::size_t off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    offs[l] = off;
    off += static_cast<std::size_t>(spec.sizes[l + 1]) * spec.sizes[l] + spec.sizes[l + 1];
  }
  for (int l = spec.layer_count() - 1; l >= 0; --l) {
    const int in = spec.sizes[l], out = spec.sizes[l + 1];
    const std::vector<double>& x = cache.act[l];
    if (l + 1 < spec.layer_count()) {
      const std::vector<double>& y = cache.act[l + 1];  // post-tanh
      for (int o = 0; o < out; ++o) d[o] *= 1.0 - y[o] * y[o];
    }
    const std::size_t base = offs[l];
    for (int o = 0; o < out; ++o) {
      double* gw = grads.data() + base + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) gw[i] += d[o] * x[i];
      grads[base + static_cast<std::size_t>(out) * in + o] += d[o];
    }
    std::vector<double> dx(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double* w = params.data() + base + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) dx[i] += w[i] * d[o];
    }
    d = std::move(dx);
  }
  return d;
}

/// Glorot-uniform initialization; the last layer is scaled by `final_scale`.
inline void mlp_init(const MlpSpec& spec, std::span<double> params, std::mt19937_64& rng,
                     double final_scale = 1.0) {
  std::size_t off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.sizes[l], out = spec.sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out)) * (l + 1 == spec.layer_count() ? final_scale : 1.0);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (int i = 0; i < out * in; ++i) params[off + i] = u(rng);
    for (int i = 0; i < out; ++i) params[off + static_cast<std::size_t>(out) * in + i] = 0.0;
    off += static_cast<std::size_t>(out) * in + out;
  }
}

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + eps);
  }
}

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal-Gaussian policy: an MLP plus a zero-initialized linear skip
/// connection producing the mean, and a learnable per-dimension log standard
/// deviation. The skip term gives gradient descent a direct path to linear
/// state-to-action maps, which the tanh stack only reaches slowly.
///
/// Optionally the mean also includes basis_gain * (basis @ state), where
/// `basis` is a fixed caller-supplied linear map and only the scalar
/// basis_gain is trained. Tying a whole structured direction to one
/// coefficient multiplies its gradient signal-to-noise by the square root of
/// the number of tied entries, which lets score-function training move along
/// it at rates the per-entry skip weights cannot sustain.
struct GaussianPolicy {
  MlpSpec spec;
  std::vector<double> params;
  std::vector<double> skip;   // action_dim x state_dim, row-major; trained
  std::vector<double> basis;  // action_dim x state_dim, row-major; fixed
  double basis_gain = 0.0;    // trained coefficient on `basis`
  std::vector<double> log_std;

  static GaussianPolicy make(int state_dim, int action_dim, int hidden, std::mt19937_64& rng,
                             double init_log_std = 0.0) {
    GaussianPolicy p;
    p.spec.sizes = {state_dim, hidden, hidden, action_dim};
    p.params.resize(p.spec.param_count());
    mlp_init(p.spec, p.params, rng, 0.01);  // small initial actions
    p.skip.assign(static_cast<std::size_t>(action_dim) * state_dim, 0.0);
    p.log_std.assign(action_dim, init_log_std);
    return p;
  }

  std::vector<double> mean(std::span<const double> state, MlpCache* cache = nullptr) const {
    std::vector<double> out = mlp_forward(spec, params, state, cache);
    const std::size_t in = state.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double* row = skip.data() + i * in;
      double acc = 0;
      for (std::size_t j = 0; j < in; ++j) acc += row[j] * state[j];
      out[i] += acc;
    }
    if (!basis.empty())
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double* row = basis.data() + i * in;
        double acc = 0;
        for (std::size_t j = 0; j < in; ++j) acc += row[j] * state[j];
        out[i] += basis_gain * acc;
      }
    return out;
  }

  /// Accumulates the loss gradient w.r.t. the skip weights for one sample:
  /// d loss / d skip[i][j] = dmu[i] * state[j].
  void skip_backward(std::span<const double> state, std::span<const double> dmu,
                     std::vector<double>& grad) const {
    const std::size_t in = state.size();
    for (std::size_t i = 0; i < dmu.size(); ++i)
      for (std::size_t j = 0; j < in; ++j) grad[i * in + j] += dmu[i] * state[j];
  }

  /// Loss gradient w.r.t. basis_gain for one sample:
  /// d loss / d basis_gain = sum_i dmu[i] * (basis @ state)[i].
  double basis_backward(std::span<const double> state, std::span<const double> dmu) const {
    if (basis.empty()) return 0.0;
    const std::size_t in = state.size();
    double g = 0;
    for (std::size_t i = 0; i < dmu.size(); ++i) {
      const double* row = basis.data() + i * in;
      double acc = 0;
      for (std::size_t j = 0; j < in; ++j) acc += row[j] * state[j];
      g += dmu[i] * acc;
    }
    return g;
  }

  std::vector<double> sample(const std::vector<double>& mu, std::mt19937_64& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> a(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) a[i] = mu[i] + std::exp(log_std[i]) * gauss(rng);
    return a;
  }

  void clamp_log_std() {
    for (double& v : log_std) v = std::clamp(v, kLogStdMin, kLogStdMax);
  }

  double entropy() const {
    double h = 0;
    for (double ls : log_std) h += ls + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    return h;
  }
};

inline double gaussian_log_prob(const std::vector<double>& mu, const std::vector<double>& log_std,
                                const std::vector<double>& action) {
  double lp = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double s = std::exp(log_std[i]);
    const double z = (action[i] - mu[i]) / s;
    lp += -log_std[i] - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
  }
  return lp;
}

inline double log_prob(const GaussianPolicy& policy, std::span<const double> state,
                       const std::vector<double>& action) {
  return gaussian_log_prob(policy.mean(state), policy.log_std, action);
}

}  // namespace swan
