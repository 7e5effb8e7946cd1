#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "su11/modes.hpp"

namespace su11 {

/// Zero-or-nonzero-mean Gaussian state of N bosonic modes in quadrature
/// form. Ordering is x_1, p_1, ..., x_N, p_N with x = a + a^dag and
/// p = -i(a - a^dag), so the vacuum covariance is the identity.
class GaussianState {
 public:
  GaussianState(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  int n_modes() const { return static_cast<int>(mean_.size() / 2); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }

  /// Sorted ascending, one value per mode.
  Eigen::VectorXd symplectic_eigenvalues() const;
  bool is_physical(double tol = 1e-9) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
};

/// <a_j^dag a_k>, <a_j a_k> and <a_k> including mean contributions.
struct ComplexMoments {
  Eigen::MatrixXcd normal;
  Eigen::MatrixXcd anomalous;
  Eigen::VectorXcd amplitude;
};

ComplexMoments complex_moments(const GaussianState& state);
/// Inverse of complex_moments.
GaussianState from_complex_moments(const ComplexMoments& moments);

GaussianState vacuum_state(int n_modes);

/// Parametric amplifier acting on disjoint mode pairs. A pair with k == kbar
/// is a single-mode squeezer; otherwise a two-mode squeezer
/// a_k -> a_k cosh G + e^{i phase} a_kbar^dag sinh G (and k <-> kbar).
struct OpaOperation {
  struct Pair {
    int k = 0;
    int kbar = 0;
    double gain = 0.0;
    double phase_offset = 0.0;  // added to pump_phase for this pair
  };
  std::vector<Pair> pairs;
  double pump_phase = 0.0;
};

GaussianState apply_opa(const GaussianState& state, const OpaOperation& op);
/// Rotation a -> a e^{i theta} of one mode.
GaussianState apply_phase(const GaussianState& state, int mode, double theta);
/// Beamsplitter with vacuum, transmission eta in [0, 1].
GaussianState apply_loss(const GaussianState& state, int mode, double eta);
GaussianState apply_loss(const GaussianState& state, double eta);
/// Passive linear map a_out = T a_in (+ vacuum), T a contraction of shape
/// (n_out x n_in). Covers basis changes, projections and mode-dependent phases.
GaussianState apply_passive(const GaussianState& state, const Eigen::MatrixXcd& transfer);

struct QuadratureMoments {
  double mean_photons = 0.0;
  double variance = 0.0;  // Var(x cos psi + p sin psi)
};

QuadratureMoments moments(const GaussianState& state, int mode, double psi);

struct GridPoint {
  int iq = 0;
  int it = 0;
};

/// Pixel-integrated field correlators <a^dag(r) a(r')> and <a(r) a(r')>,
/// in photons per pixel, for the given raster points.
struct FieldCorrelators {
  Eigen::MatrixXcd normal;
  Eigen::MatrixXcd anomalous;
};

FieldCorrelators field_correlators(const GaussianState& state, const ModeBasis& basis,
                                   std::span<const GridPoint> points);

/// Same, from precomputed complex moments (shape must match the basis).
FieldCorrelators field_correlators(const ComplexMoments& moments, const ModeBasis& basis,
                                   std::span<const GridPoint> points);

/// Write the covariance matrix as CSV.
void write_covariance_csv(const GaussianState& state, const std::string& path);

}  // namespace su11
