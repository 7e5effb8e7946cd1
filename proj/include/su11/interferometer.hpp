#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "su11/gaussian.hpp"
#include "su11/grid.hpp"
#include "su11/modes.hpp"

namespace su11 {

struct InterferometerConfig {
  double g1 = 2.1;
  double g2 = 3.3;
  double phi = 0.0;
  double eta_int = 1.0;
  double eta_det = 1.0;
  /// Second-pass phase-matching width divided by the first-pass width.
  double mismatch = 1.0;
  TransverseGrid grid;
  double pump_width = 0.45;
  double pm_width = 6.0;

  /// Per-mode gain G_k = G (lambda_k / lambda_max)^(gain_exponent / 2).
  double gain_exponent = 1.0;
  /// Quadratic phase-matching phase, see TwoPhotonAmplitude.
  double pm_chirp = 0.0;
  /// Highest |l| sector simulated; -1 uses every sector the raster resolves.
  int max_oam = -1;
  /// One mode, gains G1 and G2 exactly; no spatial structure.
  bool single_mode = false;
  /// Extra phase between the passes on all modes of sector l.
  std::map<int, double> oam_phase;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Moments of one OAM sector in the ring basis: entry i is the mode with
/// azimuthal dependence exp(i l theta) confined to radial bin i. For l > 0 the
/// rows are [+l rings, -l rings].
struct SectorMoments {
  int l = 0;
  Eigen::MatrixXcd normal;
  Eigen::MatrixXcd anomalous;
};

/// Output of the interferometer: one Gaussian state per OAM sector, each in
/// the second-pass Schmidt basis of that sector (for l > 0 the first half of
/// the modes carry +l, the second half -l, same radial order).
class MultimodeState {
 public:
  MultimodeState() = default;
  MultimodeState(TransverseGrid grid, std::vector<GaussianState> sectors,
                 std::shared_ptr<const std::vector<Eigen::MatrixXcd>> ring_transforms);
  static MultimodeState single(GaussianState state);

  bool single_mode() const { return single_mode_; }
  const TransverseGrid& grid() const { return grid_; }
  int max_oam() const { return static_cast<int>(sectors_.size()) - 1; }
  const GaussianState& sector(int l) const { return sectors_.at(l); }

  double total_photons() const;
  /// Photons in ring i carried by OAM l; rows l = -max_oam..max_oam.
  Eigen::MatrixXd ring_photons() const;
  /// Mean photons per raster pixel, index grid.index(iq, it).
  std::vector<double> intensity_image() const;
  SectorMoments ring_moments(int l) const;
  /// OAM distribution of the detected photons; domain_error when there are
  /// none.
  OAMSpectrum oam_spectrum() const;

 private:
  TransverseGrid grid_;
  bool single_mode_ = false;
  std::vector<GaussianState> sectors_;
  std::shared_ptr<const std::vector<Eigen::MatrixXcd>> rings_;
};

/// OPA1 -> internal loss -> mode overlap and phase -> OPA2(phi) -> detection loss.
class Interferometer {
 public:
  explicit Interferometer(InterferometerConfig config);

  const InterferometerConfig& config() const { return config_; }
  int max_oam() const { return max_oam_; }
  const TwoPhotonAmplitude& first_pass() const { return *tpa1_; }
  const TwoPhotonAmplitude& second_pass() const { return *tpa2_; }
  /// First-pass OAM spectrum of the bare amplitude (Schmidt weights).
  OAMSpectrum first_pass_spectrum() const;

  MultimodeState run(double phi) const;
  MultimodeState run() const { return run(config_.phi); }

  /// Second-pass Schmidt basis truncated to max_modes, with the matching
  /// marginal of the output state.
  std::pair<GaussianState, ModeBasis> assemble(const MultimodeState& out, int max_modes) const;

 private:
  MultimodeState finish(const std::vector<GaussianState>& pre, double phi) const;

  InterferometerConfig config_;
  int max_oam_ = 0;
  std::shared_ptr<const TwoPhotonAmplitude> tpa1_, tpa2_;
  std::vector<SectorDecomposition> pass1_, pass2_;
  double lambda_max1_ = 0.0, lambda_max2_ = 0.0;
  std::shared_ptr<const std::vector<Eigen::MatrixXcd>> rings_;
  std::vector<GaussianState> pre_second_;  // state entering OPA2
  friend class FringeModel;
};

/// Exact phase dependence of the output. Normal moments contain harmonics
/// {-1, 0, 1} of phi and anomalous moments {0, 1, 2}, so three runs fix them.
class FringeModel {
 public:
  explicit FringeModel(const Interferometer& ifo);

  const TransverseGrid& grid() const { return grid_; }
  bool single_mode() const { return single_mode_; }

  MultimodeState at(double phi) const;
  double total(double phi) const;
  /// Photons per ring and OAM at phi (see MultimodeState::ring_photons).
  Eigen::MatrixXd ring_photons(double phi) const;
  /// Mean photons per pixel in one ring (azimuthally uniform).
  Eigen::VectorXd ring_profile(double phi) const;

 private:
  TransverseGrid grid_;
  bool single_mode_ = false;
  std::shared_ptr<const std::vector<Eigen::MatrixXcd>> rings_;
  std::vector<std::array<Eigen::MatrixXcd, 3>> normal_;     // X, Y, Z
  std::vector<std::array<Eigen::MatrixXcd, 3>> anomalous_;  // P, Q, R
  std::array<std::complex<double>, 3> total_{};
  std::array<Eigen::MatrixXcd, 3> rings_h_;
};

struct FringeScan {
  std::vector<double> phases;
  std::vector<double> totals;
  /// Optional mean images, one per phase.
  std::vector<std::vector<double>> per_pixel;
};

MultimodeState run(const InterferometerConfig& config);
FringeScan fringe_scan(const InterferometerConfig& config, const std::vector<double>& phases,
                       bool per_pixel = false);
FringeScan fringe_scan(const FringeModel& model, const std::vector<double>& phases,
                       bool per_pixel = false);
/// (max - min) / (max + min); 0 for a constant or empty scan.
double visibility(const FringeScan& scan);

/// Diagonal of the normal field correlator: mean photons per raster pixel.
std::vector<double> intensity_profile(const GaussianState& state, const ModeBasis& basis);
std::vector<double> intensity_profile(const MultimodeState& state);

/// Radial FWHM of an azimuthally averaged image, linear interpolation.
double radial_fwhm(const std::vector<double>& image, const TransverseGrid& grid);

void write_csv(std::ostream& os, const FringeScan& scan);
std::vector<double> uniform_phases(int n, double start = 0.0, double stop = 2.0 * 3.141592653589793);

}  // namespace su11
