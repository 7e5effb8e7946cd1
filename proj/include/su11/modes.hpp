#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "su11/grid.hpp"

namespace su11 {

enum class PassLabel { kFirst, kSecond };

std::string to_string(PassLabel pass);

/// Double-Gaussian two-photon amplitude of degenerate collinear type-I PDC,
///
///   F(q_s, q_i) = exp(-|q_s + q_i|^2 / (4 pump^2)) exp(-|q_s - q_i|^2 / (4 pm^2))
///                 * D(q_s) D(q_i),   D(q) = exp(i chirp q^2 / (2 pm^2)),
///
/// normalised to unit L2 norm on the grid. The amplitude is azimuthally
/// symmetric, so it is stored as one weighted radial kernel per OAM sector:
/// sector(l)(i, j) = 2 pi sqrt(w_i w_j) K_l(q_i, q_j) with w = q dq and
/// F = sum_l K_l(q_s, q_i) exp(i l (theta_s - theta_i)). The chirp factor is
/// kept out of the kernels and carried by the mode profiles.
class TwoPhotonAmplitude {
 public:
  double pump_width() const { return pump_width_; }
  double pm_width() const { return pm_width_; }
  double pm_chirp() const { return pm_chirp_; }
  PassLabel pass() const { return pass_; }
  const TransverseGrid& grid() const { return grid_; }

  int max_oam() const { return static_cast<int>(sectors_.size()) - 1; }
  /// Real symmetric weighted kernel for sector |l| (sectors l and -l coincide).
  const Eigen::MatrixXd& sector(int l) const;
  /// Per-photon chirp phase factor at radial bin iq.
  std::complex<double> chirp_factor(int iq) const;

  /// Amplitude between two pixels of the raster.
  std::complex<double> value(int iq_s, int it_s, int iq_i, int it_i) const;

  friend TwoPhotonAmplitude build_tpa(double, double, const TransverseGrid&,
                                      PassLabel, double);

 private:
  double pump_width_ = 0.0;
  double pm_width_ = 0.0;
  double pm_chirp_ = 0.0;
  PassLabel pass_ = PassLabel::kFirst;
  TransverseGrid grid_;
  double norm_ = 1.0;  // raw L2 norm divided out of every sector
  std::vector<Eigen::MatrixXd> sectors_;
};

/// Throws ResolutionError if fewer than 4 radial samples span the FWHM of
/// the narrower Gaussian factor, or if sector |l| = grid.max_oam() still
/// carries appreciable weight (azimuthal raster too coarse).
TwoPhotonAmplitude build_tpa(double pump_width, double pm_width,
                             const TransverseGrid& grid, PassLabel pass,
                             double pm_chirp = 0.0);

struct SchmidtMode {
  int oam = 0;
  int radial = 0;
  double lambda = 0.0;
  /// Sign of the pair amplitude; -1 shifts the pair's pump phase by pi.
  int coupling_sign = 1;
  /// Radial profile R(q_i), chirp included; sum |R|^2 q dq = 1.
  Eigen::VectorXcd profile;
  /// Fraction of azimuthal power in the assigned OAM bin on the raster.
  double oam_purity = 1.0;
};

/// Truncated Schmidt basis. Modes are sorted by descending lambda; the
/// +l and -l members of a pair are adjacent with +l first.
class ModeBasis {
 public:
  ModeBasis() = default;
  ModeBasis(TransverseGrid grid, std::vector<SchmidtMode> modes, double lambda_max);

  const TransverseGrid& grid() const { return grid_; }
  std::size_t size() const { return modes_.size(); }
  bool empty() const { return modes_.empty(); }
  const SchmidtMode& operator[](std::size_t k) const { return modes_[k]; }
  const std::vector<SchmidtMode>& modes() const { return modes_; }

  /// Largest untruncated Schmidt weight; gain profiles are normalised to it.
  double lambda_max() const { return lambda_max_; }
  double retained_weight() const;
  /// True if any mode failed the 99% OAM purity check.
  bool oam_flagged() const;
  /// Index of the mode that carries -l with the same radial index.
  std::size_t partner(std::size_t k) const { return partner_[k]; }

  /// u_k at a raster pixel: R(q) exp(i l theta) / sqrt(2 pi).
  std::complex<double> value(std::size_t k, int iq, int it) const;
  /// Gram matrix of the modes under the raster inner product (pixel areas).
  Eigen::MatrixXcd gram() const;
  /// Dense (pixel x mode) matrix of mode values times sqrt(pixel area).
  Eigen::MatrixXcd sampled_modes() const;

 private:
  TransverseGrid grid_;
  std::vector<SchmidtMode> modes_;
  std::vector<std::size_t> partner_;
  double lambda_max_ = 0.0;
};

/// Eigen-decomposition of one OAM sector kernel, sorted by descending
/// lambda. Column p of `vectors` is the weighted radial vector sqrt(q dq) R(q)
/// without the chirp factor; `coupling` holds the signed kernel eigenvalue.
struct SectorDecomposition {
  int l = 0;
  Eigen::VectorXd lambda;
  Eigen::VectorXd coupling;
  Eigen::MatrixXd vectors;
};

SectorDecomposition decompose_sector(const TwoPhotonAmplitude& tpa, int l);

/// Sector-wise Schmidt decomposition. Keeps modes until the retained weight
/// reaches `cumulative` or `max_modes` is hit (OAM pairs are never split).
ModeBasis schmidt_decompose(const TwoPhotonAmplitude& tpa, int max_modes,
                            double cumulative = 0.999);

/// Normalised OAM weights Lambda_l for l in [-max_l, max_l].
class OAMSpectrum {
 public:
  OAMSpectrum() = default;
  explicit OAMSpectrum(int max_l) : max_l_(max_l), weights_(2 * max_l + 1, 0.0) {}
  OAMSpectrum(int max_l, std::vector<double> weights);

  int max_l() const { return max_l_; }
  double operator()(int l) const;
  double& at(int l);
  const std::vector<double>& weights() const { return weights_; }
  double sum() const;
  /// Divide by the sum; throws std::domain_error on an all-zero spectrum.
  void normalize();

 private:
  int max_l_ = 0;
  std::vector<double> weights_;
};

/// Lambda_l = sum of Schmidt weights with OAM l, renormalised.
OAMSpectrum oam_marginal(const ModeBasis& basis);
/// Same marginal with arbitrary per-mode weights (e.g. photon numbers).
OAMSpectrum oam_marginal(const ModeBasis& basis, std::span<const double> mode_weights);

/// (sum Lambda_l^2)^{-1}
double effective_mode_number(const OAMSpectrum& spectrum);

/// Bisect the pm/pump width ratio so the first-pass TPA reaches the target
/// OAM effective mode number. pm_width stays fixed.
double tune_width_ratio(double target_oam_modes, double pm_width,
                        const TransverseGrid& grid, double lo = 1.05, double hi = 40.0);

// Serialisation: JSON objects and "l,weight" CSV rows.
std::string to_json(const OAMSpectrum& spectrum);
std::string to_json(const ModeBasis& basis);
OAMSpectrum oam_spectrum_from_json(const std::string& text);
void write_csv(std::ostream& os, const OAMSpectrum& spectrum,
               std::span<const double> errors = {});
OAMSpectrum read_oam_csv(std::istream& is);

}  // namespace su11
