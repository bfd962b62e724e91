#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace swan {

inline constexpr double kSpeedOfLight = 2.998e8;  // m/s

/// x dBm -> linear watts.
inline double watts_from_dbm(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

enum class SinrCombining { Coherent, PerSegmentPower };

/// Physical and geometric parameters of the segmented-waveguide system.
/// Defaults follow the simulation setup: 28 GHz carrier, 50 m x 60 m area,
/// 6 users, 1 target, 100 W budget, -90 dBm noise, -20 dBm sensing threshold.
struct SystemConfig {
  double carrier_frequency_hz = 28e9;
  double effective_refractive_index = 1.4;
  double waveguide_total_length_m = 40.0;
  int segment_count = 3;
  int antennas_per_segment = 10;
  double waveguide_height_m = 5.0;
  double region_x_m = 50.0;
  double region_y_m = 60.0;
  double attenuation_db_per_m = 0.08;
  double total_power_w = 100.0;
  double noise_power_w = 1e-12;      // -90 dBm
  double bandwidth_hz = 1.0;         // rates in bits/s/Hz
  double sensing_threshold_w = 1e-5; // -20 dBm
  double min_spacing_m = 0.0;        // 0 -> auto: lambda/2
  int user_count = 6;
  int target_count = 1;
  SinrCombining sinr_combining = SinrCombining::Coherent;

  double free_space_wavelength() const { return kSpeedOfLight / carrier_frequency_hz; }
  double guided_wavelength() const { return free_space_wavelength() / effective_refractive_index; }
  double segment_length() const { return waveguide_total_length_m / segment_count; }
  double spacing() const { return min_spacing_m > 0.0 ? min_spacing_m : free_space_wavelength() / 2.0; }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("config: ") + what);
    };
    require(carrier_frequency_hz > 0, "carrier_frequency_hz must be > 0");
    require(effective_refractive_index > 0, "effective_refractive_index must be > 0");
    require(waveguide_total_length_m > 0, "waveguide_total_length_m must be > 0");
    require(segment_count >= 1, "segment_count must be >= 1");
    require(antennas_per_segment >= 1, "antennas_per_segment must be >= 1");
    require(waveguide_height_m > 0, "waveguide_height_m must be > 0");
    require(region_x_m > 0 && region_y_m > 0, "region extents must be > 0");
    require(attenuation_db_per_m >= 0, "attenuation_db_per_m must be >= 0");
    require(total_power_w > 0, "total_power_w must be > 0");
    require(noise_power_w > 0, "noise_power_w must be > 0");
    require(bandwidth_hz > 0, "bandwidth_hz must be > 0");
    require(sensing_threshold_w > 0, "sensing_threshold_w must be > 0");
    require(user_count >= 1, "user_count must be >= 1");
    require(target_count >= 0, "target_count must be >= 0");
    // Feasible placement: N antennas at spacing delta must fit one segment.
    require(spacing() * antennas_per_segment <= segment_length(),
            "min spacing times antennas_per_segment exceeds segment length");
  }
};

/// Wavelengths derived from the carrier: (free-space, guided).
inline std::pair<double, double> wavelengths(const SystemConfig& cfg) {
  return {cfg.free_space_wavelength(), cfg.guided_wavelength()};
}

namespace detail {

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config parse error at line " + std::to_string(lineno) +
                               ": expected key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

}  // namespace detail

/// Applies `key = value` pairs onto a SystemConfig. Returns the keys it did
/// not recognize so callers owning extra settings can consume the rest.
inline std::map<std::string, std::string> apply_system_keys(
    SystemConfig& cfg, const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> rest;
  for (const auto& [k, v] : kv) {
    auto d = [&] { return std::stod(v); };
    auto i = [&] { return std::stoi(v); };
    if (k == "carrier_frequency_hz") cfg.carrier_frequency_hz = d();
    else if (k == "effective_refractive_index") cfg.effective_refractive_index = d();
    else if (k == "waveguide_total_length_m") cfg.waveguide_total_length_m = d();
    else if (k == "segment_count") cfg.segment_count = i();
    else if (k == "antennas_per_segment") cfg.antennas_per_segment = i();
    else if (k == "waveguide_height_m") cfg.waveguide_height_m = d();
    else if (k == "region_x_m") cfg.region_x_m = d();
    else if (k == "region_y_m") cfg.region_y_m = d();
    else if (k == "attenuation_db_per_m") cfg.attenuation_db_per_m = d();
    else if (k == "total_power_w") cfg.total_power_w = d();
    else if (k == "noise_power_w") cfg.noise_power_w = d();
    else if (k == "noise_power_dbm") cfg.noise_power_w = watts_from_dbm(d());
    else if (k == "bandwidth_hz") cfg.bandwidth_hz = d();
    else if (k == "sensing_threshold_w") cfg.sensing_threshold_w = d();
    else if (k == "sensing_threshold_dbm") cfg.sensing_threshold_w = watts_from_dbm(d());
    else if (k == "min_spacing_m") cfg.min_spacing_m = d();
    else if (k == "user_count") cfg.user_count = i();
    else if (k == "target_count") cfg.target_count = i();
    else if (k == "sinr_combining") {
      if (v == "coherent") cfg.sinr_combining = SinrCombining::Coherent;
      else if (v == "per_segment_power") cfg.sinr_combining = SinrCombining::PerSegmentPower;
      else throw std::runtime_error("config: sinr_combining must be coherent|per_segment_power");
    } else rest[k] = v;
  }
  return rest;
}

}  // namespace swan
