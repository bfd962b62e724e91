#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "swan/config.hpp"

namespace swan {

using cplx = std::complex<double>;

struct Point3 {
  double x = 0, y = 0, z = 0;
};

inline double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Ground positions of communication users and sensing targets for one episode.
struct Scenario {
  std::vector<Point3> user_positions;    // z = 0
  std::vector<Point3> target_positions;  // z = 0
};

/// Per-segment pinching-antenna x-coordinates along the waveguide axis.
/// The guide runs parallel to the x-axis at y = region_y/2, z = waveguide height;
/// segment m spans [m*L, (m+1)*L] with its feed at the left end.
struct AntennaLayout {
  int segments = 0;
  int antennas_per_segment = 0;
  std::vector<double> positions;  // segments * antennas_per_segment, x-coordinates

  double& at(int m, int n) { return positions[m * antennas_per_segment + n]; }
  double at(int m, int n) const { return positions[m * antennas_per_segment + n]; }
};

inline double feed_x(const SystemConfig& cfg, int segment) {
  return segment * cfg.segment_length();
}

inline double waveguide_y(const SystemConfig& cfg) { return cfg.region_y_m / 2.0; }

inline Point3 antenna_point(const SystemConfig& cfg, const AntennaLayout& layout, int m, int n) {
  return {layout.at(m, n), waveguide_y(cfg), cfg.waveguide_height_m};
}

/// Complex amplitude picked up between the feed and a pinching point:
/// attenuation 10^(-kappa*l/20), guided-phase delay 2*pi*l/lambda_g, and the
/// even 1/sqrt(N) power split across the segment's antennas.
inline cplx in_waveguide_gain(double feed_x_m, double antenna_x_m, const SystemConfig& cfg) {
  const double len = std::abs(antenna_x_m - feed_x_m);
  const double mag = std::pow(10.0, -cfg.attenuation_db_per_m * len / 20.0) /
                     std::sqrt(static_cast<double>(cfg.antennas_per_segment));
  const double phase = -2.0 * std::numbers::pi * len / cfg.guided_wavelength();
  return std::polar(mag, phase);
}

/// Near-field LoS spherical-wave amplitude alpha*exp(-j*2*pi*r/lambda)/r.
inline cplx freespace_channel(const Point3& antenna, const Point3& ground,
                              const SystemConfig& cfg) {
  const double r = distance(antenna, ground);
  const double alpha = kSpeedOfLight / (4.0 * std::numbers::pi * cfg.carrier_frequency_hz);
  const double phase = -2.0 * std::numbers::pi * r / cfg.free_space_wavelength();
  return std::polar(alpha / r, phase);
}

/// Per-segment effective channel toward one ground point: the in-waveguide
/// gains composed with the free-space channels, summed over the segment's
/// antennas. Inactive segments contribute exactly zero.
inline std::vector<cplx> effective_channel(const AntennaLayout& layout, const Point3& ground,
                                           const std::vector<std::uint8_t>& active,
                                           const SystemConfig& cfg) {
  const int m_count = layout.segments;
  const int n_count = layout.antennas_per_segment;
  if (static_cast<int>(active.size()) != m_count)
    throw std::invalid_argument("effective_channel: activation size mismatch");
  std::vector<cplx> g(m_count, cplx{0.0, 0.0});
  for (int m = 0; m < m_count; ++m) {
    if (!active[m]) continue;
    const double fx = feed_x(cfg, m);
    cplx acc{0.0, 0.0};
    for (int n = 0; n < n_count; ++n) {
      const Point3 p = antenna_point(cfg, layout, m, n);
      acc += freespace_channel(p, ground, cfg) * in_waveguide_gain(fx, p.x, cfg);
    }
    g[m] = acc;
  }
  return g;
}

}  // namespace swan
