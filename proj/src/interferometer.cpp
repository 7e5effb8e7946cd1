#include "su11/interferometer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "su11/error.hpp"

namespace su11 {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

double gain_scale(double lambda, double lambda_max, double exponent) {
  if (lambda_max <= 0.0 || lambda <= 0.0) return 0.0;
  return std::pow(lambda / lambda_max, 0.5 * exponent);
}

// Normal moments in the ring basis, diagonal only.
Eigen::VectorXd ring_diagonal(const Eigen::MatrixXcd& normal, const Eigen::MatrixXcd& w) {
  const Eigen::Index n = w.rows();
  const Eigen::Index dim = normal.rows();
  Eigen::VectorXd out(dim);
  for (Eigen::Index h = 0; h < dim / n; ++h) {
    const auto block = normal.block(h * n, h * n, n, n);
    const Eigen::MatrixXcd left = w.conjugate() * block;
    for (Eigen::Index i = 0; i < n; ++i) {
      out[h * n + i] = (left.row(i) * w.row(i).transpose()).value().real();
    }
  }
  return out;
}

Eigen::MatrixXd ring_photons_from(const std::vector<Eigen::MatrixXcd>& normals,
                                  const std::vector<Eigen::MatrixXcd>& rings, int n_q) {
  const int lmax = static_cast<int>(normals.size()) - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * lmax + 1, n_q);
  for (int l = 0; l <= lmax; ++l) {
    // Photon numbers are nonnegative; clip rounding residue of empty rings.
    const Eigen::VectorXd d = ring_diagonal(normals[l], rings[l]).cwiseMax(0.0);
    out.row(lmax + l) = d.head(n_q).transpose();
    if (l > 0) out.row(lmax - l) = d.tail(n_q).transpose();
  }
  return out;
}

Eigen::MatrixXcd block_diag2(const Eigen::MatrixXcd& a) {
  const auto r = a.rows(), c = a.cols();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(2 * r, 2 * c);
  out.topLeftCorner(r, c) = a;
  out.bottomRightCorner(r, c) = a;
  return out;
}

const std::array<double, 3> kSamplePhases = {0.0, 2.0 * kPi / 3.0, 4.0 * kPi / 3.0};

// Coefficients of frequencies f[0..2] from samples at kSamplePhases.
template <class T>
std::array<T, 3> harmonics(const std::array<T, 3>& s, const std::array<int, 3>& f) {
  std::array<T, 3> out;
  for (int h = 0; h < 3; ++h) {
    out[h] = s[0] * std::complex<double>(1.0 / 3.0);
    for (int k = 1; k < 3; ++k) {
      out[h] = out[h] + s[k] * (std::polar(1.0, -f[h] * kSamplePhases[k]) / 3.0);
    }
  }
  return out;
}

}  // namespace

void InterferometerConfig::validate() const {
  require(std::isfinite(g1) && g1 >= 0.0, "g1", "gain must be finite and >= 0");
  require(std::isfinite(g2) && g2 >= 0.0, "g2", "gain must be finite and >= 0");
  require(std::isfinite(phi), "phi", "phase must be finite");
  require(eta_int >= 0.0 && eta_int <= 1.0, "eta_int", "transmission must lie in [0,1]");
  require(eta_det >= 0.0 && eta_det <= 1.0, "eta_det", "transmission must lie in [0,1]");
  require(std::isfinite(mismatch) && mismatch > 0.0, "mismatch", "must be > 0");
  if (single_mode) return;
  require(grid.n_theta >= 4 && grid.n_theta % 2 == 0, "grid.n_theta", "must be even and >= 4");
  require(grid.n_q >= 1, "grid.n_q", "must be >= 1");
  require(std::isfinite(grid.q_max) && grid.q_max > 0.0, "grid.q_max_mrad", "must be > 0");
  require(std::isfinite(pump_width) && pump_width > 0.0, "pump_width", "must be > 0");
  require(std::isfinite(pm_width) && pm_width > 0.0, "pm_width", "must be > 0");
  require(std::isfinite(gain_exponent) && gain_exponent >= 0.0, "model.gain_exponent",
          "must be >= 0");
  require(std::isfinite(pm_chirp), "model.pm_chirp", "must be finite");
  require(max_oam >= -1, "model.max_oam", "must be >= -1");
}

MultimodeState::MultimodeState(TransverseGrid grid, std::vector<GaussianState> sectors,
                               std::shared_ptr<const std::vector<Eigen::MatrixXcd>> rings)
    : grid_(grid), sectors_(std::move(sectors)), rings_(std::move(rings)) {}

MultimodeState MultimodeState::single(GaussianState state) {
  MultimodeState m;
  m.single_mode_ = true;
  m.sectors_.push_back(std::move(state));
  return m;
}

double MultimodeState::total_photons() const {
  double n = 0.0;
  for (const auto& s : sectors_) {
    const auto& v = s.cov();
    n += (v.trace() + s.mean().squaredNorm() - v.rows()) / 4.0;
  }
  return n;
}

SectorMoments MultimodeState::ring_moments(int l) const {
  if (single_mode_) throw std::logic_error("ring_moments: single-mode state has no raster");
  const auto mom = complex_moments(sectors_.at(l));
  const auto& w = (*rings_)[l];
  const Eigen::MatrixXcd wf = l == 0 ? w : block_diag2(w);
  SectorMoments out;
  out.l = l;
  out.normal = wf.conjugate() * mom.normal * wf.transpose();
  out.anomalous = wf * mom.anomalous * wf.transpose();
  return out;
}

Eigen::MatrixXd MultimodeState::ring_photons() const {
  if (single_mode_) throw std::logic_error("ring_photons: single-mode state has no raster");
  std::vector<Eigen::MatrixXcd> normals;
  for (const auto& s : sectors_) normals.push_back(complex_moments(s).normal);
  return ring_photons_from(normals, *rings_, grid_.n_q);
}

std::vector<double> MultimodeState::intensity_image() const {
  const Eigen::MatrixXd rings = ring_photons();
  std::vector<double> image(grid_.pixel_count());
  for (int iq = 0; iq < grid_.n_q; ++iq) {
    const double per_pixel = rings.col(iq).sum() / grid_.n_theta;
    for (int it = 0; it < grid_.n_theta; ++it) image[grid_.index(iq, it)] = per_pixel;
  }
  return image;
}

OAMSpectrum MultimodeState::oam_spectrum() const {
  const Eigen::MatrixXd rings = ring_photons();
  const int lmax = max_oam();
  OAMSpectrum s(lmax);
  double total = 0.0;
  for (int l = -lmax; l <= lmax; ++l) total += s.at(l) = std::max(0.0, rings.row(lmax + l).sum());
  if (total < 1e-12) throw std::domain_error("oam_spectrum: state carries no photons");
  s.normalize();
  return s;
}

Interferometer::Interferometer(InterferometerConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.single_mode) {
    GaussianState s = vacuum_state(1);
    s = apply_opa(s, {{{0, 0, config_.g1, 0.0}}, 0.0});
    s = apply_loss(s, config_.eta_int);
    const auto it = config_.oam_phase.find(0);
    if (it != config_.oam_phase.end()) s = apply_phase(s, 0, it->second);
    pre_second_.push_back(std::move(s));
    return;
  }
  const auto& grid = config_.grid;
  tpa1_ = std::make_shared<TwoPhotonAmplitude>(
      build_tpa(config_.pump_width, config_.pm_width, grid, PassLabel::kFirst, config_.pm_chirp));
  tpa2_ = std::make_shared<TwoPhotonAmplitude>(build_tpa(config_.pump_width,
                                                         config_.pm_width * config_.mismatch, grid,
                                                         PassLabel::kSecond, config_.pm_chirp));
  max_oam_ = config_.max_oam < 0 ? grid.max_oam() : std::min(config_.max_oam, grid.max_oam());
  const int n = grid.n_q;
  auto rings = std::make_shared<std::vector<Eigen::MatrixXcd>>();
  for (int l = 0; l <= max_oam_; ++l) {
    pass1_.push_back(decompose_sector(*tpa1_, l));
    pass2_.push_back(decompose_sector(*tpa2_, l));
    lambda_max1_ = std::max(lambda_max1_, pass1_.back().lambda[0]);
    lambda_max2_ = std::max(lambda_max2_, pass2_.back().lambda[0]);
  }
  Eigen::VectorXcd d1(n), d2(n);
  for (int i = 0; i < n; ++i) {
    d1[i] = tpa1_->chirp_factor(i);
    d2[i] = tpa2_->chirp_factor(i);
  }
  for (int l = 0; l <= max_oam_; ++l) {
    const auto& u = pass1_[l];
    const auto& v = pass2_[l];
    rings->push_back(d2.asDiagonal() * v.vectors.cast<std::complex<double>>());

    // OPA1 on vacuum pairs mode p with n + p (with itself for l = 0), so the
    // normal moments are diagonal per half and the anomalous ones couple the
    // halves. Loss scales both; the passive map acts on each half separately.
    const bool pair = l > 0;
    const int dim = pair ? 2 * n : n;
    Eigen::VectorXcd n_top(n), n_bot(n), m_cross(n);
    for (int p = 0; p < n; ++p) {
      const double g = config_.g1 * gain_scale(u.lambda[p], lambda_max1_, config_.gain_exponent);
      const double offset = u.coupling[p] < 0.0 ? kPi : 0.0;
      OpaOperation one;
      one.pairs.push_back({0, pair ? 1 : 0, g, offset});
      const auto pm = complex_moments(apply_opa(vacuum_state(pair ? 2 : 1), one));
      n_top[p] = config_.eta_int * pm.normal(0, 0);
      n_bot[p] = config_.eta_int * pm.normal(pair ? 1 : 0, pair ? 1 : 0);
      m_cross[p] = config_.eta_int * pm.anomalous(0, pair ? 1 : 0);
    }
    auto phases = [&](int signed_l) {
      const auto it = config_.oam_phase.find(signed_l);
      const double theta = it == config_.oam_phase.end() ? 0.0 : it->second;
      return Eigen::VectorXcd::Constant(n, std::polar(1.0, theta));
    };
    // a'_j = <v_j|u_k> a_k with the chirps of both passes.
    const Eigen::MatrixXcd overlap = v.vectors.transpose().cast<std::complex<double>>() *
                                     (d2.conjugate().cwiseProduct(d1)).asDiagonal() *
                                     u.vectors.cast<std::complex<double>>();
    const Eigen::MatrixXcd top = overlap * phases(l).asDiagonal();
    ComplexMoments mom;
    mom.amplitude = Eigen::VectorXcd::Zero(dim);
    if (!pair) {
      mom.normal = top.conjugate() * n_top.asDiagonal() * top.transpose();
      mom.anomalous = top * m_cross.asDiagonal() * top.transpose();
    } else {
      const Eigen::MatrixXcd bot = overlap * phases(-l).asDiagonal();
      mom.normal = Eigen::MatrixXcd::Zero(dim, dim);
      mom.anomalous = Eigen::MatrixXcd::Zero(dim, dim);
      mom.normal.topLeftCorner(n, n) = top.conjugate() * n_top.asDiagonal() * top.transpose();
      mom.normal.bottomRightCorner(n, n) = bot.conjugate() * n_bot.asDiagonal() * bot.transpose();
      mom.anomalous.topRightCorner(n, n) = top * m_cross.asDiagonal() * bot.transpose();
      mom.anomalous.bottomLeftCorner(n, n) = mom.anomalous.topRightCorner(n, n).transpose();
    }
    pre_second_.push_back(from_complex_moments(mom));
  }
  rings_ = rings;
}

OAMSpectrum Interferometer::first_pass_spectrum() const {
  if (config_.single_mode) return OAMSpectrum(0, {1.0});
  OAMSpectrum s(max_oam_);
  for (int l = 0; l <= max_oam_; ++l) {
    const double w = pass1_[l].lambda.sum();
    s.at(l) = w;
    s.at(-l) = w;
  }
  s.normalize();
  return s;
}

MultimodeState Interferometer::finish(const std::vector<GaussianState>& pre, double phi) const {
  if (config_.single_mode) {
    GaussianState s = apply_opa(pre[0], {{{0, 0, config_.g2, 0.0}}, phi});
    return MultimodeState::single(apply_loss(s, config_.eta_det));
  }
  const int n = config_.grid.n_q;
  std::vector<GaussianState> out;
  out.reserve(pre.size());
  for (int l = 0; l <= max_oam_; ++l) {
    const auto& v = pass2_[l];
    const bool pair = l > 0;
    OpaOperation opa2;
    opa2.pump_phase = phi;
    for (int p = 0; p < n; ++p) {
      const double g = config_.g2 * gain_scale(v.lambda[p], lambda_max2_, config_.gain_exponent);
      const double offset = v.coupling[p] < 0.0 ? kPi : 0.0;
      opa2.pairs.push_back({p, pair ? n + p : p, g, offset});
    }
    out.push_back(apply_loss(apply_opa(pre[l], opa2), config_.eta_det));
  }
  return MultimodeState(config_.grid, std::move(out), rings_);
}

MultimodeState Interferometer::run(double phi) const { return finish(pre_second_, phi); }

std::pair<GaussianState, ModeBasis> Interferometer::assemble(const MultimodeState& out,
                                                            int max_modes) const {
  if (config_.single_mode) throw std::logic_error("assemble: single-mode configuration");
  ModeBasis basis = schmidt_decompose(*tpa2_, max_modes, 2.0);
  const int n = config_.grid.n_q;
  const auto k = static_cast<Eigen::Index>(basis.size());
  std::vector<std::pair<int, int>> where(k);  // (sector, index in sector)
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto& m = basis[a];
    const int l = std::abs(m.oam);
    if (l > max_oam_) throw NumericError("assemble: basis reaches beyond the simulated sectors");
    where[a] = {l, m.oam < 0 ? n + m.radial : m.radial};
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2 * k);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto& sa = out.sector(where[a].first);
    mean.segment(2 * a, 2) = sa.mean().segment(2 * where[a].second, 2);
    for (Eigen::Index b = 0; b < k; ++b) {
      if (where[b].first != where[a].first) continue;
      cov.block(2 * a, 2 * b, 2, 2) = sa.cov().block(2 * where[a].second, 2 * where[b].second, 2, 2);
    }
  }
  return {GaussianState(std::move(mean), std::move(cov)), std::move(basis)};
}

FringeModel::FringeModel(const Interferometer& ifo)
    : grid_(ifo.config().grid), single_mode_(ifo.config().single_mode), rings_(ifo.rings_) {
  std::array<MultimodeState, 3> runs;
  for (int k = 0; k < 3; ++k) runs[k] = ifo.run(kSamplePhases[k]);
  const int sectors = runs[0].max_oam() + 1;
  std::array<std::vector<Eigen::MatrixXcd>, 3> normals;
  for (int l = 0; l < sectors; ++l) {
    std::array<Eigen::MatrixXcd, 3> nn, mm;
    for (int k = 0; k < 3; ++k) {
      auto mom = complex_moments(runs[k].sector(l));
      nn[k] = std::move(mom.normal);
      mm[k] = std::move(mom.anomalous);
      normals[k].push_back(nn[k]);
    }
    normal_.push_back(harmonics(nn, {0, 1, -1}));
    anomalous_.push_back(harmonics(mm, {0, 1, 2}));
  }
  std::array<std::complex<double>, 3> totals;
  for (int k = 0; k < 3; ++k) totals[k] = runs[k].total_photons();
  total_ = harmonics(totals, {0, 1, -1});
  if (!single_mode_) {
    std::array<Eigen::MatrixXcd, 3> rp;
    for (int k = 0; k < 3; ++k) {
      rp[k] = ring_photons_from(normals[k], *rings_, grid_.n_q).cast<std::complex<double>>();
    }
    rings_h_ = harmonics(rp, {0, 1, -1});
  }
}

MultimodeState FringeModel::at(double phi) const {
  const std::complex<double> e1 = std::polar(1.0, phi), e2 = std::polar(1.0, 2.0 * phi);
  std::vector<GaussianState> sectors;
  for (std::size_t l = 0; l < normal_.size(); ++l) {
    ComplexMoments mom;
    mom.normal = normal_[l][0] + normal_[l][1] * e1 + normal_[l][2] * std::conj(e1);
    mom.normal = 0.5 * (mom.normal + mom.normal.adjoint()).eval();
    mom.anomalous = anomalous_[l][0] + anomalous_[l][1] * e1 + anomalous_[l][2] * e2;
    mom.anomalous = 0.5 * (mom.anomalous + mom.anomalous.transpose()).eval();
    mom.amplitude = Eigen::VectorXcd::Zero(mom.normal.rows());
    sectors.push_back(from_complex_moments(mom));
  }
  if (single_mode_) return MultimodeState::single(std::move(sectors[0]));
  return MultimodeState(grid_, std::move(sectors), rings_);
}

double FringeModel::total(double phi) const {
  const std::complex<double> e1 = std::polar(1.0, phi);
  return (total_[0] + total_[1] * e1 + total_[2] * std::conj(e1)).real();
}

Eigen::MatrixXd FringeModel::ring_photons(double phi) const {
  if (single_mode_) throw std::logic_error("ring_photons: single-mode state has no raster");
  const std::complex<double> e1 = std::polar(1.0, phi);
  return (rings_h_[0] + rings_h_[1] * e1 + rings_h_[2] * std::conj(e1)).real();
}

Eigen::VectorXd FringeModel::ring_profile(double phi) const {
  return ring_photons(phi).colwise().sum().transpose() / grid_.n_theta;
}

MultimodeState run(const InterferometerConfig& config) { return Interferometer(config).run(); }

FringeScan fringe_scan(const FringeModel& model, const std::vector<double>& phases,
                       bool per_pixel) {
  FringeScan scan;
  scan.phases = phases;
  for (double phi : phases) {
    scan.totals.push_back(std::max(0.0, model.total(phi)));
    if (per_pixel) {
      const Eigen::VectorXd prof = model.ring_profile(phi);
      std::vector<double> image;
      const int n_theta = model.grid().n_theta;
      image.reserve(prof.size() * n_theta);
      for (Eigen::Index iq = 0; iq < prof.size(); ++iq) {
        image.insert(image.end(), n_theta, std::max(0.0, prof[iq]));
      }
      scan.per_pixel.push_back(std::move(image));
    }
  }
  return scan;
}

FringeScan fringe_scan(const InterferometerConfig& config, const std::vector<double>& phases,
                       bool per_pixel) {
  return fringe_scan(FringeModel(Interferometer(config)), phases, per_pixel);
}

double visibility(const FringeScan& scan) {
  if (scan.totals.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(scan.totals.begin(), scan.totals.end());
  if (*hi + *lo <= 0.0 || *hi == *lo) return 0.0;
  return (*hi - *lo) / (*hi + *lo);
}

std::vector<double> intensity_profile(const GaussianState& state, const ModeBasis& basis) {
  if (static_cast<std::size_t>(state.n_modes()) != basis.size()) {
    throw std::invalid_argument("intensity_profile: state dimension differs from basis size");
  }
  const auto mom = complex_moments(state);
  const Eigen::MatrixXcd u = basis.sampled_modes();
  const Eigen::MatrixXcd left = u.conjugate() * mom.normal;
  std::vector<double> image(u.rows());
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    image[r] = (left.row(r) * u.row(r).transpose()).value().real();
  }
  return image;
}

std::vector<double> intensity_profile(const MultimodeState& state) {
  return state.intensity_image();
}

double radial_fwhm(const std::vector<double>& image, const TransverseGrid& grid) {
  if (image.size() != grid.pixel_count()) throw std::invalid_argument("radial_fwhm: image size");
  std::vector<double> prof(grid.n_q, 0.0);
  for (int iq = 0; iq < grid.n_q; ++iq) {
    for (int it = 0; it < grid.n_theta; ++it) prof[iq] += image[grid.index(iq, it)];
    prof[iq] /= grid.n_theta * grid.pixel_area(iq);
  }
  const double peak = *std::max_element(prof.begin(), prof.end());
  if (!(peak > 0.0)) return 0.0;
  const double half = 0.5 * peak;
  for (int iq = grid.n_q - 1; iq > 0; --iq) {
    if (prof[iq - 1] >= half && prof[iq] < half) {
      const double t = (prof[iq - 1] - half) / (prof[iq - 1] - prof[iq]);
      return 2.0 * (grid.q(iq - 1) + t * grid.dq());
    }
  }
  return 2.0 * grid.q_max;
}

void write_csv(std::ostream& os, const FringeScan& scan) {
  os << "phase,total\n";
  os.precision(17);
  for (std::size_t i = 0; i < scan.phases.size(); ++i) {
    os << scan.phases[i] << ',' << scan.totals[i] << '\n';
  }
}

std::vector<double> uniform_phases(int n, double start, double stop) {
  if (n < 1) throw std::invalid_argument("uniform_phases: n must be >= 1");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? start : start + (stop - start) * i / (n - 1);
  return out;
}

}  // namespace su11
