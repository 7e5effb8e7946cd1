#pragma once

#include <vector>

#include "su11/estimators.hpp"
#include "su11/interferometer.hpp"

// Exact (moment-based) pipelines shared by the CLI and the acceptance suite.

namespace su11 {

// Phase of the global intensity minimum. The total is a first harmonic in phi,
// so three samples determine it exactly.
double dark_fringe(const FringeModel& model);

std::vector<double> offsets_from(double origin, const std::vector<double>& offsets);

InterferometerConfig calibration_config(const InterferometerConfig& config);

struct ExactSqueezing {
  FringeScan scan;
  double calibration = 0.0;
  SqueezingResult full;
  double phi_dark = 0.0;
  double visibility = 0.0;
  // Per-pixel result; empty for single-mode configs or when maps are not requested.
  SqueezingMap map;
  double best_pixel_db = 0.0;
  int best_pixel_x = -1, best_pixel_y = -1;
};

ExactSqueezing exact_squeezing(const InterferometerConfig& config, int scan_points,
                               bool with_map = false, double intensity_floor = 0.01);

}  // namespace su11
