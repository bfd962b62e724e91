#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "swan/physics.hpp"

namespace swan {

/// Complex transmit coefficients, one per (user, segment).
struct BeamMatrix {
  int users = 0;
  int segments = 0;
  std::vector<cplx> w;  // row-major users x segments

  static BeamMatrix zeros(int users, int segments) {
    return {users, segments, std::vector<cplx>(static_cast<std::size_t>(users) * segments)};
  }
  cplx& at(int k, int m) { return w[static_cast<std::size_t>(k) * segments + m]; }
  cplx at(int k, int m) const { return w[static_cast<std::size_t>(k) * segments + m]; }

  double power() const {
    double p = 0;
    for (const cplx& c : w) p += std::norm(c);
    return p;
  }
};

/// Effective channels of several ground points, row-major points x segments.
struct GainMatrix {
  int rows = 0;
  int segments = 0;
  std::vector<cplx> g;

  cplx at(int r, int m) const { return g[static_cast<std::size_t>(r) * segments + m]; }
};

inline GainMatrix effective_channels(const AntennaLayout& layout,
                                     const std::vector<Point3>& points,
                                     const std::vector<std::uint8_t>& active,
                                     const SystemConfig& cfg) {
  GainMatrix out{static_cast<int>(points.size()), layout.segments, {}};
  out.g.reserve(out.rows * static_cast<std::size_t>(out.segments));
  for (const Point3& p : points) {
    auto row = effective_channel(layout, p, active, cfg);
    out.g.insert(out.g.end(), row.begin(), row.end());
  }
  return out;
}

struct ConstraintFlags {
  bool sensing = false;      // all illuminations >= threshold
  bool power = false;        // ||W||^2 <= P (relative slack 1e-9)
  bool activation = false;   // all activation values in [0,1]
  bool spacing = false;      // pairwise spacing >= delta within each segment
};

struct MetricReport {
  std::vector<double> per_user_rate;
  double sum_rate = 0;
  std::vector<double> per_target_illumination;
  ConstraintFlags flags;
};

inline double sinr(int user, const GainMatrix& g, const BeamMatrix& w, double noise_power_w,
                   SinrCombining combining = SinrCombining::Coherent) {
  double signal = 0, interference = 0;
  if (combining == SinrCombining::Coherent) {
    for (int kp = 0; kp < w.users; ++kp) {
      cplx acc{0, 0};
      for (int m = 0; m < g.segments; ++m) acc += g.at(user, m) * w.at(kp, m);
      (kp == user ? signal : interference) += std::norm(acc);
    }
  } else {
    // Literal per-segment power combining: sum of |h^T s_m|^2 over segments.
    for (int kp = 0; kp < w.users; ++kp)
      for (int m = 0; m < g.segments; ++m)
        (kp == user ? signal : interference) += std::norm(g.at(user, m) * w.at(kp, m));
  }
  return signal / (interference + noise_power_w);
}

inline double sum_rate(const GainMatrix& g, const BeamMatrix& w, double noise_power_w,
                       double bandwidth_hz,
                       SinrCombining combining = SinrCombining::Coherent) {
  double total = 0;
  for (int k = 0; k < w.users; ++k)
    total += bandwidth_hz * std::log2(1.0 + sinr(k, g, w, noise_power_w, combining));
  return total;
}

/// Expected received power at each target for unit-power independent symbols,
/// in closed form: sum over users of |sum_m g_m w_{k,m}|^2.
inline std::vector<double> illumination_power(const GainMatrix& target_gains,
                                              const BeamMatrix& w) {
  std::vector<double> out(target_gains.rows, 0.0);
  for (int s = 0; s < target_gains.rows; ++s) {
    double acc = 0;
    for (int k = 0; k < w.users; ++k) {
      cplx inner{0, 0};
      for (int m = 0; m < w.segments; ++m) inner += target_gains.at(s, m) * w.at(k, m);
      acc += std::norm(inner);
    }
    out[s] = acc;
  }
  return out;
}

inline ConstraintFlags check_constraints(const AntennaLayout& layout, const BeamMatrix& w,
                                         const std::vector<double>& activation,
                                         const std::vector<double>& illuminations,
                                         const SystemConfig& cfg) {
  ConstraintFlags f;
  f.sensing = true;
  for (double v : illuminations)
    if (v < cfg.sensing_threshold_w) f.sensing = false;
  f.power = w.power() <= cfg.total_power_w * (1.0 + 1e-9);
  f.activation = true;
  for (double a : activation)
    if (!(a >= 0.0 && a <= 1.0)) f.activation = false;
  f.spacing = true;
  const double delta = cfg.spacing();
  for (int m = 0; m < layout.segments; ++m)
    for (int n = 0; n + 1 < layout.antennas_per_segment; ++n)
      if (std::abs(layout.at(m, n + 1) - layout.at(m, n)) < delta * (1.0 - 1e-12))
        f.spacing = false;
  return f;
}

/// Full metric evaluation for one (layout, activation, W) triple.
inline MetricReport evaluate_metrics(const GainMatrix& user_gains, const GainMatrix& target_gains,
                                     const AntennaLayout& layout, const BeamMatrix& w,
                                     const std::vector<double>& activation,
                                     const SystemConfig& cfg) {
  MetricReport rep;
  rep.per_user_rate.resize(w.users);
  for (int k = 0; k < w.users; ++k) {
    rep.per_user_rate[k] =
        cfg.bandwidth_hz *
        std::log2(1.0 + sinr(k, user_gains, w, cfg.noise_power_w, cfg.sinr_combining));
    rep.sum_rate += rep.per_user_rate[k];
  }
  rep.per_target_illumination = illumination_power(target_gains, w);
  rep.flags = check_constraints(layout, w, activation, rep.per_target_illumination, cfg);
  return rep;
}

}  // namespace swan
