#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "su11/grid.hpp"
#include "su11/interferometer.hpp"
#include "su11/modes.hpp"
#include "su11/sampler.hpp"

namespace su11 {

/// Intensity covariance between pixels at angular separation dtheta on
/// rings of radius q0, averaged over all pixel pairs with that separation.
struct AngularCovariance {
  std::vector<double> delta_theta;               // d * dtheta, d = 0..n_theta-1
  std::vector<double> q0;                        // ring radii used
  std::vector<std::vector<double>> per_ring;     // Cov(dtheta) per ring
  std::vector<std::vector<double>> per_ring_se;  // standard error per bin
  std::size_t frame_count = 0;
  /// Per-frame contributions (frames x n_theta) per ring; their mean times
  /// n/(n-1) is the ring covariance. Empty on the analytic path.
  std::vector<Eigen::MatrixXd> per_frame;

  /// Ring-averaged covariance.
  std::vector<double> mean() const;
};

/// Sample covariance from frames (n-1 normalisation). Rings are resampled by
/// linear interpolation in q; each q0 averages 2*ring_halfwidth+1 sub-rings
/// spaced one radial bin apart.
AngularCovariance angular_covariance(const FrameStack& stack, const TransverseGrid& grid,
                                     const std::vector<double>& q0_set, int ring_halfwidth = 1);

/// Wick-theorem prediction of the same quantity from the state's moments.
AngularCovariance angular_covariance(const MultimodeState& state, FilterTag filter,
                                     const std::vector<double>& q0_set, int ring_halfwidth = 1);

/// Every radial bin centre whose ring carries at least `fraction` of the
/// brightest ring's mean pixel intensity.
std::vector<double> bright_rings(const std::vector<double>& mean_image, const TransverseGrid& grid,
                                 double fraction = 0.0);

/// Single ring holding Cov(dtheta) = [sum_l Lambda_l exp(i l dtheta)]^2.
AngularCovariance covariance_from_spectrum(const OAMSpectrum& spectrum, int n_theta);

enum class RingAveraging {
  kRootPerRing,  // square root and Fourier transform per ring, then sum rings
  kCovariance,   // average the covariance over rings, then one square root
};

struct OamOptions {
  RingAveraging averaging = RingAveraging::kRootPerRing;
  double noise_floor_sigmas = 2.0;
  int bootstrap = 100;
  std::uint64_t seed = 1;
  int max_l = -1;  // -1: n_theta/2 - 1
};

struct OamEstimate {
  OAMSpectrum spectrum;
  std::vector<double> errors;  // bootstrap standard deviation per weight
  double effective_modes = 0.0;
  double effective_modes_error = 0.0;
  double clamped_fraction = 0.0;
  std::vector<std::string> warnings;
};

OamEstimate oam_weights_from_covariance(const AngularCovariance& cov, const OamOptions& options = {});

/// Calibration constant: mean total output intensity with OPA1 blocked.
double calibrate_C(const FringeScan& vacuum_scan);
double calibrate_C(const FrameStack& vacuum_stack);

struct SqueezingResult {
  std::vector<double> phases;
  std::vector<double> psi;       // quadrature angle, 0 at the anti-squeezed maximum
  std::vector<double> variance;  // shot-noise units
  std::vector<double> db;
  double calibration = 0.0;
  double squeezing_db = 0.0;
  double anti_squeezing_db = 0.0;
  double phi_squeezed = 0.0;
  double phi_anti_squeezed = 0.0;
};

/// Var(x_psi) = I(phi) / C with psi = (phi - phi_max) / 2.
SqueezingResult quadrature_variance_estimate(const FringeScan& scan, double calibration);

/// Pixel selection for scalar squeezing estimates: "full", "pixel(x,y)" or
/// "rect(x0,y0,x1,y1)" with x the column (azimuthal) and y the row (radial)
/// index, rectangle bounds inclusive.
struct Roi {
  enum class Kind { kFull, kPixel, kRect };
  Kind kind = Kind::kFull;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  static Roi parse(const std::string& text);
  std::vector<std::size_t> pixels(int height, int width) const;
  std::string to_string() const;
};

/// Scalar estimate from one stack per phase and a calibration stack.
SqueezingResult squeezing_from_stacks(const std::vector<FrameStack>& per_phase,
                                      const FrameStack& calibration, const Roi& roi);

struct SqueezingMap {
  int height = 0;
  int width = 0;
  std::vector<double> squeezing_db;
  std::vector<double> anti_squeezing_db;
  /// Standard error of the squeezing value from frame statistics.
  std::vector<double> squeezing_sigma_db;
  std::vector<std::uint8_t> mask;  // 1 = valid
  std::vector<double> calibration;
};

/// Per-pixel estimate; pixels whose calibration intensity falls below
/// floor_fraction of the brightest pixel are masked and set to 0 dB.
SqueezingMap squeezing_map(const std::vector<FrameStack>& per_phase, const FrameStack& calibration,
                           double floor_fraction = 0.01);
/// Same from mean images (analytic path, no statistical error).
SqueezingMap squeezing_map(const std::vector<std::vector<double>>& per_phase_means,
                           const std::vector<double>& calibration_mean, int height, int width,
                           double floor_fraction = 0.01);

struct GainFit {
  double c = 0.0;
  double amplitude = 0.0;
  double gain_at_max = 0.0;  // c * sqrt(P_max)
  double rss = 0.0;
  std::vector<double> residuals;
  std::vector<std::pair<double, double>> trace;  // (c, rss) of the coarse scan
};

/// Least squares I = A sinh^2(c sqrt(P)) with A profiled out.
GainFit fit_gain(const std::vector<double>& powers, const std::vector<double>& intensities);

double to_db(double variance);

void write_csv(std::ostream& os, const SqueezingResult& result);

}  // namespace su11
