#include "su11/modes.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "su11/bessel.hpp"
#include "su11/error.hpp"

namespace su11 {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Sector |l| = max_oam may carry at most this fraction of the norm.
constexpr double kAzimuthalTailTolerance = 1e-5;
constexpr int kMinSamplesAcrossWidth = 4;

}  // namespace

std::string to_string(PassLabel pass) {
  return pass == PassLabel::kFirst ? "first" : "second";
}

const Eigen::MatrixXd& TwoPhotonAmplitude::sector(int l) const {
  const int a = std::abs(l);
  if (a > max_oam()) throw std::out_of_range("TwoPhotonAmplitude::sector: |l| too large");
  return sectors_[a];
}

std::complex<double> TwoPhotonAmplitude::chirp_factor(int iq) const {
  const double q = grid_.q(iq);
  return std::polar(1.0, pm_chirp_ * q * q / (2.0 * pm_width_ * pm_width_));
}

std::complex<double> TwoPhotonAmplitude::value(int iq_s, int it_s, int iq_i, int it_i) const {
  const double qs = grid_.q(iq_s), ts = grid_.theta(it_s);
  const double qi = grid_.q(iq_i), ti = grid_.theta(it_i);
  const double sx = qs * std::cos(ts), sy = qs * std::sin(ts);
  const double ix = qi * std::cos(ti), iy = qi * std::sin(ti);
  const double plus2 = (sx + ix) * (sx + ix) + (sy + iy) * (sy + iy);
  const double minus2 = (sx - ix) * (sx - ix) + (sy - iy) * (sy - iy);
  const double mag = std::exp(-plus2 / (4.0 * pump_width_ * pump_width_) -
                              minus2 / (4.0 * pm_width_ * pm_width_));
  return mag * (chirp_factor(iq_s) * chirp_factor(iq_i)) / norm_;
}

TwoPhotonAmplitude build_tpa(double pump_width, double pm_width, const TransverseGrid& grid,
                             PassLabel pass, double pm_chirp) {
  grid.validate();
  if (!(pump_width > 0.0) || !(pm_width > 0.0)) {
    throw std::invalid_argument("build_tpa: widths must be positive");
  }
  const double narrow = std::min(pump_width, pm_width);
  // FWHM of exp(-x^2 / (4 s^2)) is 4 sqrt(ln 2) s.
  const double samples = 4.0 * std::sqrt(std::log(2.0)) * narrow / grid.dq();
  if (samples < kMinSamplesAcrossWidth) {
    std::ostringstream msg;
    msg << "build_tpa: grid too coarse, " << samples << " radial samples across the "
        << "narrower width " << narrow << " (need " << kMinSamplesAcrossWidth << ")";
    throw ResolutionError(msg.str());
  }

  TwoPhotonAmplitude tpa;
  tpa.pump_width_ = pump_width;
  tpa.pm_width_ = pm_width;
  tpa.pm_chirp_ = pm_chirp;
  tpa.pass_ = pass;
  tpa.grid_ = grid;

  const int n = grid.n_q;
  const int lmax = grid.max_oam();
  const double a = 1.0 / (4.0 * pump_width * pump_width) + 1.0 / (4.0 * pm_width * pm_width);
  const double c = 0.5 * (1.0 / (pump_width * pump_width) - 1.0 / (pm_width * pm_width));
  // exp(-c q q' cos) = sum_l I_l(|c| q q') (sign)^l exp(i l dtheta)
  const double sign = c > 0.0 ? -1.0 : 1.0;

  tpa.sectors_.assign(lmax + 1, Eigen::MatrixXd::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double qi = grid.q(i), qj = grid.q(j);
      const double z = std::abs(c) * qi * qj;
      const double envelope = std::exp(-a * (qi * qi + qj * qj) + z);
      const double weight = kTwoPi * std::sqrt(qi * grid.dq() * qj * grid.dq());
      const std::vector<double> bessel = scaled_bessel_i(z, lmax);
      double parity = 1.0;
      for (int l = 0; l <= lmax; ++l) {
        const double v = weight * envelope * bessel[l] * parity;
        tpa.sectors_[l](i, j) = v;
        tpa.sectors_[l](j, i) = v;
        parity *= sign;
      }
    }
  }

  double norm2 = 0.0;
  for (int l = 0; l <= lmax; ++l) {
    norm2 += (l == 0 ? 1.0 : 2.0) * tpa.sectors_[l].squaredNorm();
  }
  if (!(norm2 > 0.0)) throw NumericError("build_tpa: amplitude vanishes on the grid");
  const double tail = 2.0 * tpa.sectors_[lmax].squaredNorm() / norm2;
  if (tail > kAzimuthalTailTolerance) {
    std::ostringstream msg;
    msg << "build_tpa: azimuthal raster too coarse, sector |l|=" << lmax
        << " holds weight " << tail;
    throw ResolutionError(msg.str());
  }
  tpa.norm_ = std::sqrt(norm2);
  for (auto& s : tpa.sectors_) s /= tpa.norm_;
  return tpa;
}

ModeBasis::ModeBasis(TransverseGrid grid, std::vector<SchmidtMode> modes, double lambda_max)
    : grid_(grid), modes_(std::move(modes)), lambda_max_(lambda_max) {
  partner_.resize(modes_.size());
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    partner_[k] = k;
    if (modes_[k].oam == 0) continue;
    bool found = false;
    for (std::size_t j = 0; j < modes_.size(); ++j) {
      if (modes_[j].oam == -modes_[k].oam && modes_[j].radial == modes_[k].radial) {
        partner_[k] = j;
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("ModeBasis: OAM pair is missing its partner");
  }
}

double ModeBasis::retained_weight() const {
  double s = 0.0;
  for (const auto& m : modes_) s += m.lambda;
  return s;
}

bool ModeBasis::oam_flagged() const {
  return std::any_of(modes_.begin(), modes_.end(),
                     [](const SchmidtMode& m) { return m.oam_purity < 0.99; });
}

std::complex<double> ModeBasis::value(std::size_t k, int iq, int it) const {
  const auto& m = modes_[k];
  return m.profile[iq] * std::polar(1.0 / std::sqrt(kTwoPi), m.oam * grid_.theta(it));
}

Eigen::MatrixXcd ModeBasis::gram() const {
  const std::size_t k = modes_.size();
  // Raster azimuthal overlap depends only on the OAM difference.
  auto azimuthal = [this](int dl) {
    std::complex<double> s = 0.0;
    for (int t = 0; t < grid_.n_theta; ++t) s += std::polar(1.0, dl * grid_.theta(t));
    return s / static_cast<double>(grid_.n_theta);
  };
  Eigen::MatrixXcd g(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      std::complex<double> radial = 0.0;
      for (int i = 0; i < grid_.n_q; ++i) {
        radial += std::conj(modes_[a].profile[i]) * modes_[b].profile[i] * grid_.q(i) * grid_.dq();
      }
      const std::complex<double> v = radial * azimuthal(modes_[b].oam - modes_[a].oam);
      g(a, b) = v;
      g(b, a) = std::conj(v);
    }
  }
  return g;
}

Eigen::MatrixXcd ModeBasis::sampled_modes() const {
  Eigen::MatrixXcd out(grid_.pixel_count(), modes_.size());
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    for (int iq = 0; iq < grid_.n_q; ++iq) {
      const double root_area = std::sqrt(grid_.pixel_area(iq));
      for (int it = 0; it < grid_.n_theta; ++it) {
        out(grid_.index(iq, it), k) = value(k, iq, it) * root_area;
      }
    }
  }
  return out;
}

namespace {

double azimuthal_purity(int l, const TransverseGrid& grid) {
  // DFT of the raster samples exp(i l theta_t); power in bin (l mod n_theta).
  const int n = grid.n_theta;
  double total = 0.0, in_bin = 0.0;
  for (int m = 0; m < n; ++m) {
    std::complex<double> c = 0.0;
    for (int t = 0; t < n; ++t) c += std::polar(1.0, (l - m) * grid.theta(t));
    const double p = std::norm(c);
    total += p;
    if (((l % n) + n) % n == m) in_bin = p;
  }
  return total > 0.0 ? in_bin / total : 0.0;
}

struct SectorEntry {
  int l;
  int p;
  double lambda;
  int sign;
  Eigen::VectorXd vec;
};

}  // namespace

SectorDecomposition decompose_sector(const TwoPhotonAmplitude& tpa, int l) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tpa.sector(l));
  if (es.info() != Eigen::Success) throw NumericError("decompose_sector: eigensolver failed");
  const Eigen::Index n = es.eigenvalues().size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return ev[a] * ev[a] > ev[b] * ev[b];
  });
  SectorDecomposition d;
  d.l = std::abs(l);
  d.lambda.resize(n);
  d.coupling.resize(n);
  d.vectors.resize(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    d.coupling[p] = ev[order[p]];
    d.lambda[p] = ev[order[p]] * ev[order[p]];
    Eigen::VectorXd v = es.eigenvectors().col(order[p]);
    // Fix the sign so the largest component is positive.
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    d.vectors.col(p) = v;
  }
  return d;
}

ModeBasis schmidt_decompose(const TwoPhotonAmplitude& tpa, int max_modes, double cumulative) {
  if (max_modes < 1) throw std::invalid_argument("schmidt_decompose: max_modes must be >= 1");
  const auto& grid = tpa.grid();
  std::vector<SectorEntry> entries;
  for (int l = 0; l <= tpa.max_oam(); ++l) {
    const auto d = decompose_sector(tpa, l);
    for (Eigen::Index p = 0; p < d.lambda.size(); ++p) {
      entries.push_back({l, static_cast<int>(p), d.lambda[p], d.coupling[p] < 0.0 ? -1 : 1,
                         d.vectors.col(p)});
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const SectorEntry& x, const SectorEntry& y) {
    if (x.lambda != y.lambda) return x.lambda > y.lambda;
    return x.l < y.l;
  });
  const double lambda_max = entries.empty() ? 0.0 : entries.front().lambda;
  std::vector<double> purity_cache(tpa.max_oam() + 1, -1.0);
  std::vector<SchmidtMode> modes;
  double kept = 0.0;
  for (const auto& e : entries) {
    if (kept >= cumulative) break;
    const int count = e.l == 0 ? 1 : 2;
    if (static_cast<int>(modes.size()) + count > max_modes) break;
    if (purity_cache[e.l] < 0.0) purity_cache[e.l] = azimuthal_purity(e.l, grid);
    SchmidtMode m;
    m.oam = e.l;
    m.radial = e.p;
    m.lambda = e.lambda;
    m.coupling_sign = e.sign;
    m.oam_purity = purity_cache[e.l];
    m.profile.resize(grid.n_q);
    for (int i = 0; i < grid.n_q; ++i) {
      m.profile[i] = e.vec[i] / std::sqrt(grid.q(i) * grid.dq()) * tpa.chirp_factor(i);
    }
    modes.push_back(m);
    if (e.l != 0) {
      m.oam = -e.l;
      modes.push_back(m);
    }
    kept += count * e.lambda;
  }
  return ModeBasis(grid, std::move(modes), lambda_max);
}

OAMSpectrum::OAMSpectrum(int max_l, std::vector<double> weights)
    : max_l_(max_l), weights_(std::move(weights)) {
  if (static_cast<int>(weights_.size()) != 2 * max_l + 1) {
    throw std::invalid_argument("OAMSpectrum: expected 2*max_l+1 weights");
  }
}

double OAMSpectrum::operator()(int l) const {
  if (std::abs(l) > max_l_) return 0.0;
  return weights_[l + max_l_];
}

double& OAMSpectrum::at(int l) {
  if (std::abs(l) > max_l_) throw std::out_of_range("OAMSpectrum::at");
  return weights_[l + max_l_];
}

double OAMSpectrum::sum() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

void OAMSpectrum::normalize() {
  const double s = sum();
  if (!(s > 0.0)) throw std::domain_error("OAMSpectrum: all-zero spectrum");
  for (double& w : weights_) w /= s;
}

OAMSpectrum oam_marginal(const ModeBasis& basis, std::span<const double> mode_weights) {
  if (basis.empty()) throw std::invalid_argument("oam_marginal: empty basis");
  if (mode_weights.size() != basis.size()) {
    throw std::invalid_argument("oam_marginal: one weight per mode required");
  }
  int lmax = 0;
  for (const auto& m : basis.modes()) lmax = std::max(lmax, std::abs(m.oam));
  OAMSpectrum s(lmax);
  for (std::size_t k = 0; k < basis.size(); ++k) s.at(basis[k].oam) += mode_weights[k];
  s.normalize();
  return s;
}

OAMSpectrum oam_marginal(const ModeBasis& basis) {
  std::vector<double> w(basis.size());
  for (std::size_t k = 0; k < basis.size(); ++k) w[k] = basis[k].lambda;
  return oam_marginal(basis, w);
}

double effective_mode_number(const OAMSpectrum& spectrum) {
  double s2 = 0.0;
  for (double w : spectrum.weights()) s2 += w * w;
  if (!(s2 > 0.0)) throw std::domain_error("effective_mode_number: all-zero spectrum");
  return 1.0 / s2;
}

double tune_width_ratio(double target, double pm_width, const TransverseGrid& grid, double lo,
                        double hi) {
  // The OAM marginal of the full decomposition is the per-sector Frobenius
  // weight, so no eigensolve is needed inside the bisection.
  auto modes_at = [&](double ratio) {
    const auto tpa = build_tpa(pm_width / ratio, pm_width, grid, PassLabel::kFirst);
    const int lmax = tpa.max_oam();
    OAMSpectrum s(lmax);
    for (int l = 0; l <= lmax; ++l) {
      const double w = tpa.sector(l).squaredNorm();
      s.at(l) = w;
      s.at(-l) = w;
    }
    s.normalize();
    return effective_mode_number(s);
  };
  double f_lo = modes_at(lo) - target;
  double f_hi = modes_at(hi) - target;
  if (f_lo * f_hi > 0.0) {
    throw NumericError("tune_width_ratio: target not bracketed by the ratio interval");
  }
  for (int it = 0; it < 80 && hi - lo > 1e-10 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = modes_at(mid) - target;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::string to_json(const OAMSpectrum& spectrum) {
  nlohmann::json j;
  std::vector<int> ls;
  for (int l = -spectrum.max_l(); l <= spectrum.max_l(); ++l) ls.push_back(l);
  j["l"] = ls;
  j["weights"] = spectrum.weights();
  j["effective_mode_number"] = effective_mode_number(spectrum);
  return j.dump(2);
}

std::string to_json(const ModeBasis& basis) {
  nlohmann::json j;
  j["n_modes"] = basis.size();
  j["lambda_max"] = basis.lambda_max();
  j["retained_weight"] = basis.retained_weight();
  j["oam_flagged"] = basis.oam_flagged();
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : basis.modes()) {
    modes.push_back({{"l", m.oam}, {"radial", m.radial}, {"lambda", m.lambda},
                     {"oam_purity", m.oam_purity}});
  }
  j["modes"] = modes;
  return j.dump(2);
}

OAMSpectrum oam_spectrum_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto ls = j.at("l").get<std::vector<int>>();
  const auto ws = j.at("weights").get<std::vector<double>>();
  if (ls.size() != ws.size() || ls.empty()) throw std::invalid_argument("bad OAM spectrum JSON");
  int lmax = 0;
  for (int l : ls) lmax = std::max(lmax, std::abs(l));
  OAMSpectrum s(lmax);
  for (std::size_t i = 0; i < ls.size(); ++i) s.at(ls[i]) = ws[i];
  return s;
}

void write_csv(std::ostream& os, const OAMSpectrum& spectrum, std::span<const double> errors) {
  const bool with_err = !errors.empty();
  if (with_err && errors.size() != spectrum.weights().size()) {
    throw std::invalid_argument("write_csv: one error per weight required");
  }
  os << (with_err ? "l,weight,error\n" : "l,weight\n");
  os.precision(17);
  for (int l = -spectrum.max_l(); l <= spectrum.max_l(); ++l) {
    os << l << ',' << spectrum(l);
    if (with_err) os << ',' << errors[l + spectrum.max_l()];
    os << '\n';
  }
}

OAMSpectrum read_oam_csv(std::istream& is) {
  std::string line;
  std::getline(is, line);  // header
  std::vector<std::pair<int, double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int l;
    char comma;
    double w;
    if (!(ls >> l >> comma >> w)) throw FormatError("read_oam_csv: malformed row: " + line);
    rows.emplace_back(l, w);
  }
  int lmax = 0;
  for (const auto& [l, w] : rows) lmax = std::max(lmax, std::abs(l));
  OAMSpectrum s(lmax);
  for (const auto& [l, w] : rows) s.at(l) = w;
  return s;
}

}  // namespace su11
