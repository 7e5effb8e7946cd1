#include "su11/pipeline.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace su11 {

double dark_fringe(const FringeModel& model) {
  const double t0 = model.total(0.0);
  const double t1 = model.total(2.0 * std::numbers::pi / 3.0);
  const double t2 = model.total(4.0 * std::numbers::pi / 3.0);
  // t(phi) = a + |b| cos(phi + arg b)
  const std::complex<double> w = std::polar(1.0, -2.0 * std::numbers::pi / 3.0);
  const std::complex<double> b = (t0 + t1 * w + t2 * w * w) * (2.0 / 3.0);
  double phi = std::numbers::pi - std::arg(b);
  phi = std::fmod(phi, 2.0 * std::numbers::pi);
  if (phi < 0.0) phi += 2.0 * std::numbers::pi;
  return phi;
}

std::vector<double> offsets_from(double origin, const std::vector<double>& offsets) {
  std::vector<double> out;
  out.reserve(offsets.size());
  for (double d : offsets) out.push_back(origin + d);
  return out;
}

InterferometerConfig calibration_config(const InterferometerConfig& config) {
  InterferometerConfig cal = config;
  cal.g1 = 0.0;
  return cal;
}

ExactSqueezing exact_squeezing(const InterferometerConfig& config, int scan_points, bool with_map,
                               double intensity_floor) {
  ExactSqueezing out;
  const Interferometer ifo(config);
  const FringeModel model(ifo);
  out.phi_dark = dark_fringe(model);
  // Scan centred on the dark fringe so that both extrema are sampled exactly.
  const auto phases = uniform_phases(scan_points, out.phi_dark - std::numbers::pi,
                                     out.phi_dark + std::numbers::pi);
  out.scan = fringe_scan(model, phases);
  out.visibility = visibility(out.scan);

  const Interferometer cal_ifo(calibration_config(config));
  const FringeModel cal_model(cal_ifo);
  const FringeScan cal = fringe_scan(cal_model, {0.0}, with_map && !config.single_mode);
  out.calibration = calibrate_C(cal);
  out.full = quadrature_variance_estimate(out.scan, out.calibration);

  if (!with_map || config.single_mode) return out;
  // Each pixel is a first harmonic in phi too, a coarser grid finds its extrema.
  const FringeScan pix = fringe_scan(model, uniform_phases(std::max(scan_points / 8, 16),
                                                           out.phi_dark - std::numbers::pi,
                                                           out.phi_dark + std::numbers::pi),
                                     true);
  const auto& g = config.grid;
  out.map = squeezing_map(pix.per_pixel, cal.per_pixel.front(), g.n_q, g.n_theta, intensity_floor);
  out.best_pixel_db = 0.0;
  for (int iq = 0; iq < g.n_q; ++iq) {
    for (int it = 0; it < g.n_theta; ++it) {
      const auto p = static_cast<std::size_t>(g.index(iq, it));
      if (out.map.mask[p] && out.map.squeezing_db[p] < out.best_pixel_db) {
        out.best_pixel_db = out.map.squeezing_db[p];
        out.best_pixel_x = it;
        out.best_pixel_y = iq;
      }
    }
  }
  return out;
}

}  // namespace su11
