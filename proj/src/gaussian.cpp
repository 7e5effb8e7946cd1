#include "su11/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "su11/error.hpp"

namespace su11 {

namespace {

// V <- S V S^T and mean <- S mean, where S is the identity except on the
// rows/columns `idx`, where it equals `block`.
void apply_local(Eigen::MatrixXd& cov, Eigen::VectorXd& mean, const std::vector<int>& idx,
                 const Eigen::MatrixXd& block) {
  const int m = static_cast<int>(idx.size());
  const int n = static_cast<int>(cov.rows());
  Eigen::MatrixXd rows(m, n);
  for (int a = 0; a < m; ++a) rows.row(a) = cov.row(idx[a]);
  const Eigen::MatrixXd new_rows = block * rows;
  for (int a = 0; a < m; ++a) cov.row(idx[a]) = new_rows.row(a);
  Eigen::MatrixXd cols(n, m);
  for (int a = 0; a < m; ++a) cols.col(a) = cov.col(idx[a]);
  const Eigen::MatrixXd new_cols = cols * block.transpose();
  for (int a = 0; a < m; ++a) cov.col(idx[a]) = new_cols.col(a);

  Eigen::VectorXd sub(m);
  for (int a = 0; a < m; ++a) sub[a] = mean[idx[a]];
  sub = block * sub;
  for (int a = 0; a < m; ++a) mean[idx[a]] = sub[a];
}

void check_mode(const GaussianState& s, int mode) {
  if (mode < 0 || mode >= s.n_modes()) throw std::out_of_range("mode index out of range");
}

}  // namespace

GaussianState::GaussianState(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (mean_.size() % 2 != 0 || cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
    throw std::invalid_argument("GaussianState: inconsistent dimensions");
  }
  if (!mean_.allFinite() || !cov_.allFinite()) {
    throw NumericError("GaussianState: non-finite moments");
  }
}

Eigen::VectorXd GaussianState::symplectic_eigenvalues() const {
  const int n = n_modes();
  if (n == 0) return {};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov_ + cov_.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
                               es.eigenvectors().transpose();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int k = 0; k < n; ++k) {
    omega(2 * k, 2 * k + 1) = 1.0;
    omega(2 * k + 1, 2 * k) = -1.0;
  }
  const Eigen::MatrixXd a = root * omega * root;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(a.transpose() * a);
  const Eigen::VectorXd nu2 = es2.eigenvalues();
  Eigen::VectorXd nu(n);
  for (int k = 0; k < n; ++k) nu[k] = std::sqrt(std::max(0.0, nu2[2 * k]));
  return nu;
}

bool GaussianState::is_physical(double tol) const {
  if (n_modes() == 0) return true;
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, cov_.cwiseAbs().maxCoeff())) {
    return false;
  }
  return symplectic_eigenvalues().minCoeff() >= 1.0 - tol;
}

ComplexMoments complex_moments(const GaussianState& state) {
  const int n = state.n_modes();
  const auto& v = state.cov();
  const auto& mu = state.mean();
  ComplexMoments out;
  out.normal.resize(n, n);
  out.anomalous.resize(n, n);
  out.amplitude.resize(n);
  for (int k = 0; k < n; ++k) out.amplitude[k] = {mu[2 * k] / 2.0, mu[2 * k + 1] / 2.0};
  const std::complex<double> i(0.0, 1.0);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      const double xx = v(2 * j, 2 * k), pp = v(2 * j + 1, 2 * k + 1);
      const double xp = v(2 * j, 2 * k + 1), px = v(2 * j + 1, 2 * k);
      out.normal(j, k) = 0.25 * (xx + pp + i * (xp - px) - (j == k ? 2.0 : 0.0)) +
                         std::conj(out.amplitude[j]) * out.amplitude[k];
      out.anomalous(j, k) = 0.25 * (xx - pp + i * (xp + px)) + out.amplitude[j] * out.amplitude[k];
    }
  }
  return out;
}

GaussianState from_complex_moments(const ComplexMoments& mom) {
  const auto n = mom.normal.rows();
  if (mom.normal.cols() != n || mom.anomalous.rows() != n || mom.anomalous.cols() != n ||
      mom.amplitude.size() != n) {
    throw std::invalid_argument("from_complex_moments: inconsistent dimensions");
  }
  Eigen::VectorXd mean(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    mean[2 * k] = 2.0 * mom.amplitude[k].real();
    mean[2 * k + 1] = 2.0 * mom.amplitude[k].imag();
  }
  Eigen::MatrixXd cov(2 * n, 2 * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto nn = mom.normal(j, k) - std::conj(mom.amplitude[j]) * mom.amplitude[k];
      const auto mm = mom.anomalous(j, k) - mom.amplitude[j] * mom.amplitude[k];
      const double delta = j == k ? 1.0 : 0.0;
      cov(2 * j, 2 * k) = 2.0 * (nn.real() + mm.real()) + delta;
      cov(2 * j + 1, 2 * k + 1) = 2.0 * (nn.real() - mm.real()) + delta;
      cov(2 * j, 2 * k + 1) = 2.0 * (nn.imag() + mm.imag());
      cov(2 * j + 1, 2 * k) = 2.0 * (mm.imag() - nn.imag());
    }
  }
  return {std::move(mean), std::move(cov)};
}

GaussianState vacuum_state(int n_modes) {
  if (n_modes < 1) throw std::invalid_argument("vacuum_state: n_modes must be >= 1");
  return {Eigen::VectorXd::Zero(2 * n_modes), Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes)};
}

GaussianState apply_opa(const GaussianState& state, const OpaOperation& op) {
  const int n = state.n_modes();
  std::vector<char> used(n, 0);
  Eigen::MatrixXd cov = state.cov();
  Eigen::VectorXd mean = state.mean();
  for (const auto& pr : op.pairs) {
    if (pr.k < 0 || pr.k >= n || pr.kbar < 0 || pr.kbar >= n) {
      throw std::out_of_range("apply_opa: mode index out of range");
    }
    if (!(pr.gain >= 0.0)) throw std::invalid_argument("apply_opa: gain must be >= 0");
    if (used[pr.k] || used[pr.kbar]) {
      throw std::invalid_argument("apply_opa: a mode appears in more than one pair");
    }
    used[pr.k] = used[pr.kbar] = 1;
    if (pr.gain == 0.0) continue;
    const double c = std::cosh(pr.gain), s = std::sinh(pr.gain);
    const double phase = op.pump_phase + pr.phase_offset;
    const double cp = std::cos(phase), sp = std::sin(phase);
    if (pr.k == pr.kbar) {
      Eigen::Matrix2d b;
      b << c + s * cp, s * sp, s * sp, c - s * cp;
      apply_local(cov, mean, {2 * pr.k, 2 * pr.k + 1}, b);
    } else {
      // x1' = c x1 + s (cos x2 + sin p2), p1' = c p1 + s (sin x2 - cos p2)
      Eigen::Matrix4d b;
      b << c, 0, s * cp, s * sp,
           0, c, s * sp, -s * cp,
           s * cp, s * sp, c, 0,
           s * sp, -s * cp, 0, c;
      apply_local(cov, mean, {2 * pr.k, 2 * pr.k + 1, 2 * pr.kbar, 2 * pr.kbar + 1}, b);
    }
  }
  return {std::move(mean), std::move(cov)};
}

GaussianState apply_phase(const GaussianState& state, int mode, double theta) {
  check_mode(state, mode);
  Eigen::MatrixXd cov = state.cov();
  Eigen::VectorXd mean = state.mean();
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d b;
  b << c, -s, s, c;
  apply_local(cov, mean, {2 * mode, 2 * mode + 1}, b);
  return {std::move(mean), std::move(cov)};
}

GaussianState apply_loss(const GaussianState& state, int mode, double eta) {
  check_mode(state, mode);
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("apply_loss: eta must lie in [0,1]");
  Eigen::MatrixXd cov = state.cov();
  Eigen::VectorXd mean = state.mean();
  const double r = std::sqrt(eta);
  apply_local(cov, mean, {2 * mode, 2 * mode + 1}, r * Eigen::Matrix2d::Identity());
  cov(2 * mode, 2 * mode) += 1.0 - eta;
  cov(2 * mode + 1, 2 * mode + 1) += 1.0 - eta;
  return {std::move(mean), std::move(cov)};
}

GaussianState apply_loss(const GaussianState& state, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("apply_loss: eta must lie in [0,1]");
  const int d = 2 * state.n_modes();
  Eigen::MatrixXd cov = eta * state.cov() + (1.0 - eta) * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd mean = std::sqrt(eta) * state.mean();
  return {std::move(mean), std::move(cov)};
}

GaussianState apply_passive(const GaussianState& state, const Eigen::MatrixXcd& transfer) {
  const int n_in = state.n_modes();
  if (transfer.cols() != n_in) throw std::invalid_argument("apply_passive: column count != modes");
  const int n_out = static_cast<int>(transfer.rows());
  if (n_out == 0) throw std::invalid_argument("apply_passive: empty output");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(transfer.adjoint() * transfer,
                                                           Eigen::EigenvaluesOnly);
  if (es.eigenvalues().maxCoeff() > 1.0 + 1e-9) {
    throw std::invalid_argument("apply_passive: transfer matrix is not a contraction");
  }
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(2 * n_out, 2 * n_in);
  for (int j = 0; j < n_out; ++j) {
    for (int k = 0; k < n_in; ++k) {
      const double re = transfer(j, k).real(), im = transfer(j, k).imag();
      t(2 * j, 2 * k) = re;
      t(2 * j, 2 * k + 1) = -im;
      t(2 * j + 1, 2 * k) = im;
      t(2 * j + 1, 2 * k + 1) = re;
    }
  }
  Eigen::MatrixXd cov = t * state.cov() * t.transpose() +
                        Eigen::MatrixXd::Identity(2 * n_out, 2 * n_out) - t * t.transpose();
  Eigen::VectorXd mean = t * state.mean();
  return {std::move(mean), std::move(cov)};
}

QuadratureMoments moments(const GaussianState& state, int mode, double psi) {
  check_mode(state, mode);
  const auto& v = state.cov();
  const auto& mu = state.mean();
  const int x = 2 * mode, p = 2 * mode + 1;
  const double c = std::cos(psi), s = std::sin(psi);
  QuadratureMoments m;
  m.variance = v(x, x) * c * c + 2.0 * v(x, p) * c * s + v(p, p) * s * s;
  m.mean_photons = (v(x, x) + v(p, p) + mu[x] * mu[x] + mu[p] * mu[p] - 2.0) / 4.0;
  return m;
}

FieldCorrelators field_correlators(const ComplexMoments& mom, const ModeBasis& basis,
                                   std::span<const GridPoint> points) {
  const auto k = static_cast<Eigen::Index>(basis.size());
  if (mom.normal.rows() != k) {
    throw std::invalid_argument("field_correlators: state dimension differs from basis size");
  }
  const auto& grid = basis.grid();
  const auto np = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXcd u(np, k);  // sqrt(area) u_k(r)
  for (Eigen::Index r = 0; r < np; ++r) {
    const auto& pt = points[r];
    const double root_area = std::sqrt(grid.pixel_area(pt.iq));
    for (Eigen::Index j = 0; j < k; ++j) {
      u(r, j) = basis.value(static_cast<std::size_t>(j), pt.iq, pt.it) * root_area;
    }
  }
  FieldCorrelators fc;
  fc.normal = u.conjugate() * mom.normal * u.transpose();
  fc.anomalous = u * mom.anomalous * u.transpose();
  return fc;
}

FieldCorrelators field_correlators(const GaussianState& state, const ModeBasis& basis,
                                   std::span<const GridPoint> points) {
  if (static_cast<std::size_t>(state.n_modes()) != basis.size()) {
    throw std::invalid_argument("field_correlators: state dimension differs from basis size");
  }
  return field_correlators(complex_moments(state), basis, points);
}

void write_covariance_csv(const GaussianState& state, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.precision(17);
  const auto& v = state.cov();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) os << (j ? "," : "") << v(i, j);
    os << '\n';
  }
}

}  // namespace su11
