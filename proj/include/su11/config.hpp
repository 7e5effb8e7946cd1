#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "su11/estimators.hpp"
#include "su11/interferometer.hpp"
#include "su11/sampler.hpp"

namespace su11 {

struct EstimatorSettings {
  std::vector<double> q0_mrad;  // empty: every ring above ring_floor
  double ring_floor = 0.0;      // fraction of the brightest ring
  int ring_halfwidth = 1;
  OamOptions oam;
  double intensity_floor = 0.01;
  int scan_points = 721;
};

/// One document shared by every command. Interferometer keys sit at the top
/// level; command-specific keys live under model, detector, sampler and
/// estimators.
struct SimulationConfig {
  InterferometerConfig interferometer;
  std::uint64_t seed = 1;
  DetectorModel detector;
  FilterTag filter = FilterTag::kShifted;
  EstimatorSettings estimators;
};

/// Parses JSON text. Syntax errors report line and column; semantic errors
/// name the field. Both throw ConfigError.
SimulationConfig parse_config(const std::string& text, const std::string& source = "<config>");
SimulationConfig load_config(const std::string& path);
/// Canonical JSON with every key present; parse_config(to_json(c)) == c.
std::string to_json(const SimulationConfig& config);

}  // namespace su11
