#include "su11/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <regex>

#include <boost/math/tools/minima.hpp>

#include "su11/error.hpp"
#include "su11/kernels.hpp"
#include "su11/parallel.hpp"

namespace su11 {

namespace {

constexpr double kPi = std::numbers::pi;

struct RingSample {
  int i0 = 0;
  int i1 = 0;
  double t = 0.0;  // weight of i1
};

std::vector<RingSample> sub_rings(double q0, const TransverseGrid& grid, int halfwidth) {
  auto locate = [&](double q, RingSample& out) {
    const double f = q / grid.dq() - 0.5;
    if (f < -1e-9 || f > grid.n_q - 1 + 1e-9) return false;
    const double fc = std::clamp(f, 0.0, static_cast<double>(grid.n_q - 1));
    out.i0 = static_cast<int>(std::floor(fc));
    out.t = fc - out.i0;
    out.i1 = std::min(out.i0 + 1, grid.n_q - 1);
    if (out.i1 == out.i0) out.t = 0.0;
    return true;
  };
  RingSample centre;
  if (!locate(q0, centre)) {
    throw std::out_of_range("angular_covariance: ring q0 = " + std::to_string(q0) +
                            " lies outside the grid");
  }
  std::vector<RingSample> out;
  for (int k = -halfwidth; k <= halfwidth; ++k) {
    RingSample s;
    if (locate(q0 + k * grid.dq(), s)) out.push_back(s);
  }
  return out;
}

std::vector<double> delta_axis(int n_theta) {
  std::vector<double> d(n_theta);
  for (int k = 0; k < n_theta; ++k) d[k] = 2.0 * kPi * k / n_theta;
  return d;
}

struct RingSpectrum {
  std::vector<double> weights;  // l = -lmax..lmax, before clamping
  int clamped = 0;
  int negative_beyond_floor = 0;
};

RingSpectrum root_fourier(const std::vector<double>& cov, const std::vector<double>& se,
                          double sigmas, int lmax) {
  const int n = static_cast<int>(cov.size());
  std::vector<double> root(n);
  RingSpectrum rs;
  for (int d = 0; d < n; ++d) {
    const double floor = se.empty() ? 0.0 : sigmas * se[d];
    if (cov[d] < -floor) ++rs.negative_beyond_floor;
    if (cov[d] <= floor) {
      ++rs.clamped;
      root[d] = 0.0;
    } else {
      root[d] = std::sqrt(cov[d]);
    }
  }
  rs.weights.assign(2 * lmax + 1, 0.0);
  for (int l = -lmax; l <= lmax; ++l) {
    double s = 0.0;
    for (int d = 0; d < n; ++d) s += root[d] * std::cos(2.0 * kPi * ((static_cast<long>(l) * d) % n) / n);
    rs.weights[l + lmax] = s / n;
  }
  return rs;
}

struct SpectrumResult {
  OAMSpectrum spectrum;
  double clamped_fraction = 0.0;
  bool negative_lobes = false;
};

SpectrumResult spectrum_from_rings(const std::vector<std::vector<double>>& rings,
                                   const std::vector<std::vector<double>>& ses,
                                   const OamOptions& opt, int lmax) {
  std::vector<double> total(2 * lmax + 1, 0.0);
  int clamped = 0, bins = 0;
  bool negative = false;
  auto accumulate = [&](const std::vector<double>& c, const std::vector<double>& se) {
    const RingSpectrum rs = root_fourier(c, se, opt.noise_floor_sigmas, lmax);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += rs.weights[k];
    clamped += rs.clamped;
    bins += static_cast<int>(c.size());
    negative = negative || rs.negative_beyond_floor > 0;
  };
  if (opt.averaging == RingAveraging::kRootPerRing) {
    for (std::size_t r = 0; r < rings.size(); ++r) accumulate(rings[r], ses.empty() ? std::vector<double>{} : ses[r]);
  } else {
    const std::size_t n = rings.front().size();
    std::vector<double> mean(n, 0.0), se(n, 0.0);
    for (std::size_t r = 0; r < rings.size(); ++r) {
      for (std::size_t d = 0; d < n; ++d) {
        mean[d] += rings[r][d] / rings.size();
        if (!ses.empty()) se[d] += ses[r][d] * ses[r][d];
      }
    }
    for (auto& s : se) s = std::sqrt(s) / rings.size();
    accumulate(mean, ses.empty() ? std::vector<double>{} : se);
  }
  OAMSpectrum s(lmax);
  for (int l = -lmax; l <= lmax; ++l) s.at(l) = std::max(0.0, total[l + lmax]);
  s.normalize();
  return {s, bins > 0 ? static_cast<double>(clamped) / bins : 0.0, negative};
}

// Wick: Cov(I_i(t), I_j(t + d)) = |N_ij(d)|^2 + |A_ij(d)|^2.
std::vector<double> wick_pair(const std::vector<SectorMoments>& mom, int n_q, int n_theta, int i,
                              int j) {
  const int lmax = static_cast<int>(mom.size()) - 1;
  std::vector<double> out(n_theta, 0.0);
  for (int d = 0; d < n_theta; ++d) {
    std::complex<double> nsum = 0.0, asum = 0.0;
    for (int l = -lmax; l <= lmax; ++l) {
      const auto& m = mom[std::abs(l)];
      const bool pair = l != 0;
      const int ri = l >= 0 ? i : n_q + i;      // row of b_{l,i}
      const int rj = l >= 0 ? j : n_q + j;      // row of b_{l,j}
      const int pj = !pair ? j : (l > 0 ? n_q + j : j);  // row of b_{-l,j}
      const double arg = 2.0 * kPi * ((static_cast<long>(l) * d) % n_theta) / n_theta;
      nsum += m.normal(ri, rj) * std::polar(1.0, arg);
      asum += m.anomalous(ri, pj) * std::polar(1.0, -arg);
    }
    nsum /= n_theta;
    asum /= n_theta;
    out[d] = std::norm(nsum) + std::norm(asum);
  }
  return out;
}

}  // namespace

std::vector<double> AngularCovariance::mean() const {
  if (per_ring.empty()) return {};
  std::vector<double> m(per_ring.front().size(), 0.0);
  for (const auto& r : per_ring) {
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += r[d] / per_ring.size();
  }
  return m;
}

AngularCovariance angular_covariance(const FrameStack& stack, const TransverseGrid& grid,
                                     const std::vector<double>& q0_set, int ring_halfwidth) {
  if (stack.n_frames < 2) throw std::invalid_argument("angular_covariance: need at least 2 frames");
  if (stack.height != static_cast<std::uint32_t>(grid.n_q) ||
      stack.width != static_cast<std::uint32_t>(grid.n_theta)) {
    throw std::invalid_argument("angular_covariance: stack shape does not match the grid");
  }
  for (double p : stack.phases) {
    if (p != stack.phases.front()) {
      throw std::invalid_argument("angular_covariance: frames carry different phase tags");
    }
  }
  if (q0_set.empty()) throw std::invalid_argument("angular_covariance: empty ring set");
  if (ring_halfwidth < 0) throw std::invalid_argument("angular_covariance: negative halfwidth");
  const int nf = static_cast<int>(stack.n_frames), nt = grid.n_theta;
  AngularCovariance out;
  out.delta_theta = delta_axis(nt);
  out.frame_count = stack.n_frames;
  out.q0 = q0_set;
  out.per_ring.resize(q0_set.size());
  out.per_ring_se.resize(q0_set.size());
  out.per_frame.resize(q0_set.size());
  const auto autocorr = kernels::circular_autocorr_accumulate();
  parallel_for(q0_set.size(), [&](std::size_t r) {
    const auto subs = sub_rings(q0_set[r], grid, ring_halfwidth);
    Eigen::MatrixXd contrib = Eigen::MatrixXd::Zero(nf, nt);
    std::vector<double> x(static_cast<std::size_t>(nf) * nt);
    std::vector<double> acc(nt);
    for (const auto& s : subs) {
      std::vector<double> mu(nt, 0.0);
      for (int f = 0; f < nf; ++f) {
        const float* a = stack.frame(f) + static_cast<std::size_t>(s.i0) * nt;
        const float* b = stack.frame(f) + static_cast<std::size_t>(s.i1) * nt;
        for (int t = 0; t < nt; ++t) {
          const double v = (1.0 - s.t) * a[t] + s.t * b[t];
          x[static_cast<std::size_t>(f) * nt + t] = v;
          mu[t] += v;
        }
      }
      for (auto& m : mu) m /= nf;
      for (int f = 0; f < nf; ++f) {
        double* xf = x.data() + static_cast<std::size_t>(f) * nt;
        for (int t = 0; t < nt; ++t) xf[t] -= mu[t];
        std::fill(acc.begin(), acc.end(), 0.0);
        autocorr(xf, nt, acc.data());
        for (int d = 0; d < nt; ++d) contrib(f, d) += acc[d] / (static_cast<double>(nt) * subs.size());
      }
    }
    std::vector<double> cov(nt), se(nt);
    for (int d = 0; d < nt; ++d) {
      const double m = contrib.col(d).mean();
      cov[d] = m * nf / (nf - 1.0);
      const double var = (contrib.col(d).array() - m).square().sum() / (nf - 1.0);
      se[d] = std::sqrt(var / nf) * nf / (nf - 1.0);
    }
    out.per_ring[r] = std::move(cov);
    out.per_ring_se[r] = std::move(se);
    out.per_frame[r] = std::move(contrib);
  });
  return out;
}

AngularCovariance angular_covariance(const MultimodeState& state, FilterTag filter,
                                     const std::vector<double>& q0_set, int ring_halfwidth) {
  if (state.single_mode()) throw std::invalid_argument("angular_covariance: no spatial raster");
  if (q0_set.empty()) throw std::invalid_argument("angular_covariance: empty ring set");
  const auto& grid = state.grid();
  std::vector<SectorMoments> mom;
  for (int l = 0; l <= state.max_oam(); ++l) {
    mom.push_back(state.ring_moments(l));
    if (filter == FilterTag::kShifted) mom.back().anomalous.setZero();
  }
  const int nt = grid.n_theta;
  AngularCovariance out;
  out.delta_theta = delta_axis(nt);
  out.q0 = q0_set;
  out.per_ring.resize(q0_set.size());
  out.per_ring_se.resize(q0_set.size());
  parallel_for(q0_set.size(), [&](std::size_t r) {
    const auto subs = sub_rings(q0_set[r], grid, ring_halfwidth);
    std::vector<double> cov(nt, 0.0);
    for (const auto& s : subs) {
      const int idx[2] = {s.i0, s.i1};
      const double w[2] = {1.0 - s.t, s.t};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          if (w[a] == 0.0 || w[b] == 0.0) continue;
          const auto c = wick_pair(mom, grid.n_q, nt, idx[a], idx[b]);
          for (int d = 0; d < nt; ++d) cov[d] += w[a] * w[b] * c[d] / subs.size();
        }
      }
    }
    out.per_ring[r] = std::move(cov);
    out.per_ring_se[r].assign(nt, 0.0);
  });
  return out;
}

std::vector<double> bright_rings(const std::vector<double>& mean_image, const TransverseGrid& grid,
                                 double fraction) {
  std::vector<double> ring(grid.n_q, 0.0);
  for (int iq = 0; iq < grid.n_q; ++iq) {
    for (int it = 0; it < grid.n_theta; ++it) ring[iq] += mean_image.at(grid.index(iq, it));
  }
  const double top = *std::max_element(ring.begin(), ring.end());
  std::vector<double> out;
  for (int iq = 0; iq < grid.n_q; ++iq) {
    if (ring[iq] > 0.0 && ring[iq] >= fraction * top) out.push_back(grid.q(iq));
  }
  return out;
}

AngularCovariance covariance_from_spectrum(const OAMSpectrum& spectrum, int n_theta) {
  if (n_theta < 4 || n_theta % 2 != 0) {
    throw std::invalid_argument("covariance_from_spectrum: n_theta must be even and >= 4");
  }
  AngularCovariance out;
  out.delta_theta = delta_axis(n_theta);
  out.q0 = {0.0};
  std::vector<double> cov(n_theta);
  for (int d = 0; d < n_theta; ++d) {
    std::complex<double> s = 0.0;
    for (int l = -spectrum.max_l(); l <= spectrum.max_l(); ++l) {
      s += spectrum(l) * std::polar(1.0, out.delta_theta[d] * l);
    }
    cov[d] = std::norm(s);
  }
  out.per_ring = {cov};
  out.per_ring_se = {std::vector<double>(n_theta, 0.0)};
  return out;
}

OamEstimate oam_weights_from_covariance(const AngularCovariance& cov, const OamOptions& opt) {
  if (cov.per_ring.empty()) throw std::invalid_argument("oam_weights_from_covariance: no rings");
  const int nt = static_cast<int>(cov.per_ring.front().size());
  const int lmax = opt.max_l < 0 ? nt / 2 - 1 : std::min(opt.max_l, nt / 2 - 1);
  for (const auto& r : cov.per_ring) {
    for (double v : r) {
      if (!std::isfinite(v)) throw NumericError("oam_weights_from_covariance: non-finite covariance");
    }
  }
  OamEstimate est;
  const auto main = spectrum_from_rings(cov.per_ring, cov.per_ring_se, opt, lmax);
  est.spectrum = main.spectrum;
  est.effective_modes = effective_mode_number(est.spectrum);
  est.clamped_fraction = main.clamped_fraction;
  if (main.negative_lobes) {
    est.warnings.push_back("covariance has negative lobes beyond the noise floor; "
                           "square-root sign is ambiguous");
  }
  if (main.clamped_fraction > 0.05) {
    est.warnings.push_back("more than 5% of covariance bins clamped at the noise floor");
  }
  est.errors.assign(est.spectrum.weights().size(), 0.0);
  const bool can_boot = opt.bootstrap > 1 && !cov.per_frame.empty() && cov.frame_count >= 2;
  if (!can_boot) return est;

  const int nf = static_cast<int>(cov.frame_count);
  std::vector<OAMSpectrum> draws(opt.bootstrap);
  parallel_for(static_cast<std::size_t>(opt.bootstrap), [&](std::size_t b) {
    std::mt19937_64 rng(frame_seed(opt.seed, b));
    std::uniform_int_distribution<int> pick(0, nf - 1);
    std::vector<int> idx(nf);
    for (auto& i : idx) i = pick(rng);
    std::vector<std::vector<double>> rings(cov.per_frame.size(), std::vector<double>(nt, 0.0));
    for (std::size_t r = 0; r < cov.per_frame.size(); ++r) {
      for (int i : idx) {
        for (int d = 0; d < nt; ++d) rings[r][d] += cov.per_frame[r](i, d);
      }
      for (auto& v : rings[r]) v /= nf - 1.0;
    }
    draws[b] = spectrum_from_rings(rings, cov.per_ring_se, opt, lmax).spectrum;
  });
  std::vector<double> ks;
  for (const auto& d : draws) ks.push_back(effective_mode_number(d));
  auto sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x / v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1.0));
  };
  est.effective_modes_error = sd(ks);
  for (std::size_t k = 0; k < est.errors.size(); ++k) {
    std::vector<double> v;
    for (const auto& d : draws) v.push_back(d.weights()[k]);
    est.errors[k] = sd(v);
  }
  return est;
}

double calibrate_C(const FringeScan& vacuum_scan) {
  if (vacuum_scan.totals.empty()) throw NumericError("calibrate_C: empty calibration scan");
  double c = 0.0;
  for (double t : vacuum_scan.totals) c += t / vacuum_scan.totals.size();
  if (!(c > 0.0)) throw NumericError("calibrate_C: calibration intensity is zero");
  return c;
}

double calibrate_C(const FrameStack& vacuum_stack) {
  if (vacuum_stack.n_frames == 0) throw NumericError("calibrate_C: empty calibration stack");
  double c = 0.0;
  for (float v : vacuum_stack.data) c += v;
  c /= vacuum_stack.n_frames;
  if (!(c > 0.0)) throw NumericError("calibrate_C: calibration intensity is zero");
  return c;
}

double to_db(double variance) { return 10.0 * std::log10(variance); }

SqueezingResult quadrature_variance_estimate(const FringeScan& scan, double calibration) {
  if (!(calibration > 0.0)) throw NumericError("quadrature_variance_estimate: C must be > 0");
  if (scan.totals.empty() || scan.totals.size() != scan.phases.size()) {
    throw std::invalid_argument("quadrature_variance_estimate: malformed scan");
  }
  SqueezingResult res;
  res.calibration = calibration;
  res.phases = scan.phases;
  const auto imax = std::max_element(scan.totals.begin(), scan.totals.end()) - scan.totals.begin();
  const auto imin = std::min_element(scan.totals.begin(), scan.totals.end()) - scan.totals.begin();
  res.phi_anti_squeezed = scan.phases[imax];
  res.phi_squeezed = scan.phases[imin];
  for (std::size_t k = 0; k < scan.totals.size(); ++k) {
    const double v = std::max(scan.totals[k], 0.0) / calibration;
    res.psi.push_back(0.5 * (scan.phases[k] - res.phi_anti_squeezed));
    res.variance.push_back(v);
    res.db.push_back(v > 0.0 ? to_db(v) : -std::numeric_limits<double>::infinity());
  }
  res.squeezing_db = res.db[imin];
  res.anti_squeezing_db = res.db[imax];
  return res;
}

Roi Roi::parse(const std::string& text) {
  static const std::regex pixel(R"(\s*pixel\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*)");
  static const std::regex rect(R"(\s*rect\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*)");
  std::smatch m;
  Roi r;
  if (text == "full") return r;
  if (std::regex_match(text, m, pixel)) {
    r.kind = Kind::kPixel;
    r.x0 = r.x1 = std::stoi(m[1]);
    r.y0 = r.y1 = std::stoi(m[2]);
    return r;
  }
  if (std::regex_match(text, m, rect)) {
    r.kind = Kind::kRect;
    r.x0 = std::stoi(m[1]);
    r.y0 = std::stoi(m[2]);
    r.x1 = std::stoi(m[3]);
    r.y1 = std::stoi(m[4]);
    if (r.x1 < r.x0 || r.y1 < r.y0) throw ConfigError("roi: empty rectangle '" + text + "'");
    return r;
  }
  throw ConfigError("roi: expected full, pixel(x,y) or rect(x0,y0,x1,y1), got '" + text + "'");
}

std::vector<std::size_t> Roi::pixels(int height, int width) const {
  std::vector<std::size_t> out;
  if (kind == Kind::kFull) {
    out.resize(static_cast<std::size_t>(height) * width);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }
  if (x1 >= width || y1 >= height) throw ConfigError("roi: " + to_string() + " exceeds the frame");
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) out.push_back(static_cast<std::size_t>(y) * width + x);
  }
  return out;
}

std::string Roi::to_string() const {
  switch (kind) {
    case Kind::kFull:
      return "full";
    case Kind::kPixel:
      return "pixel(" + std::to_string(x0) + "," + std::to_string(y0) + ")";
    case Kind::kRect:
      break;
  }
  return "rect(" + std::to_string(x0) + "," + std::to_string(y0) + "," + std::to_string(x1) + "," +
         std::to_string(y1) + ")";
}

SqueezingResult squeezing_from_stacks(const std::vector<FrameStack>& per_phase,
                                      const FrameStack& calibration, const Roi& roi) {
  if (per_phase.empty()) throw std::invalid_argument("squeezing_from_stacks: no phase stacks");
  const auto pix = roi.pixels(static_cast<int>(calibration.height), static_cast<int>(calibration.width));
  auto roi_sum = [&](const FrameStack& s) {
    if (s.height != calibration.height || s.width != calibration.width) {
      throw FormatError("squeezing_from_stacks: frame shapes differ");
    }
    if (s.n_frames == 0) throw FormatError("squeezing_from_stacks: empty stack");
    const auto mean = frame_mean(s);
    double v = 0.0;
    for (auto p : pix) v += mean[p];
    return v;
  };
  FringeScan scan;
  for (const auto& s : per_phase) {
    scan.phases.push_back(s.phases.empty() ? 0.0 : s.phases.front());
    scan.totals.push_back(roi_sum(s));
  }
  return quadrature_variance_estimate(scan, roi_sum(calibration));
}

namespace {

SqueezingMap build_map(const std::vector<std::vector<double>>& means,
                       const std::vector<std::vector<double>>& ses, const std::vector<double>& cal,
                       const std::vector<double>& cal_se, int height, int width,
                       double floor_fraction) {
  SqueezingMap map;
  map.height = height;
  map.width = width;
  const std::size_t n = static_cast<std::size_t>(height) * width;
  map.squeezing_db.assign(n, 0.0);
  map.anti_squeezing_db.assign(n, 0.0);
  map.squeezing_sigma_db.assign(n, 0.0);
  map.mask.assign(n, 0);
  map.calibration = cal;
  const double top = cal.empty() ? 0.0 : *std::max_element(cal.begin(), cal.end());
  const double k = 10.0 / std::log(10.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!(cal[p] > 0.0) || cal[p] < floor_fraction * top) continue;
    std::size_t kmin = 0, kmax = 0;
    for (std::size_t q = 1; q < means.size(); ++q) {
      if (means[q][p] < means[kmin][p]) kmin = q;
      if (means[q][p] > means[kmax][p]) kmax = q;
    }
    if (!(means[kmin][p] > 0.0)) continue;
    map.mask[p] = 1;
    map.squeezing_db[p] = to_db(means[kmin][p] / cal[p]);
    map.anti_squeezing_db[p] = to_db(means[kmax][p] / cal[p]);
    if (!ses.empty()) {
      const double a = ses[kmin][p] / means[kmin][p], b = cal_se[p] / cal[p];
      map.squeezing_sigma_db[p] = k * std::sqrt(a * a + b * b);
    }
  }
  return map;
}

void mean_and_se(const FrameStack& s, std::vector<double>& mean, std::vector<double>& se) {
  if (s.n_frames < 2) throw FormatError("squeezing_map: need at least 2 frames per stack");
  mean = frame_mean(s);
  se.assign(mean.size(), 0.0);
  for (std::size_t f = 0; f < s.n_frames; ++f) {
    const float* fr = s.frame(f);
    for (std::size_t i = 0; i < mean.size(); ++i) se[i] += (fr[i] - mean[i]) * (fr[i] - mean[i]);
  }
  for (auto& v : se) v = std::sqrt(v / (s.n_frames - 1.0) / s.n_frames);
}

}  // namespace

SqueezingMap squeezing_map(const std::vector<FrameStack>& per_phase, const FrameStack& calibration,
                           double floor_fraction) {
  if (per_phase.empty()) throw std::invalid_argument("squeezing_map: no phase stacks");
  std::vector<std::vector<double>> means(per_phase.size()), ses(per_phase.size());
  for (std::size_t k = 0; k < per_phase.size(); ++k) {
    if (per_phase[k].height != calibration.height || per_phase[k].width != calibration.width) {
      throw FormatError("squeezing_map: frame shapes differ");
    }
    mean_and_se(per_phase[k], means[k], ses[k]);
  }
  std::vector<double> cal, cal_se;
  mean_and_se(calibration, cal, cal_se);
  return build_map(means, ses, cal, cal_se, static_cast<int>(calibration.height),
                   static_cast<int>(calibration.width), floor_fraction);
}

SqueezingMap squeezing_map(const std::vector<std::vector<double>>& per_phase_means,
                           const std::vector<double>& calibration_mean, int height, int width,
                           double floor_fraction) {
  if (per_phase_means.empty()) throw std::invalid_argument("squeezing_map: no phase images");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (calibration_mean.size() != n) throw FormatError("squeezing_map: calibration size");
  for (const auto& m : per_phase_means) {
    if (m.size() != n) throw FormatError("squeezing_map: image size");
  }
  return build_map(per_phase_means, {}, calibration_mean, {}, height, width, floor_fraction);
}

GainFit fit_gain(const std::vector<double>& powers, const std::vector<double>& intensities) {
  if (powers.size() != intensities.size()) throw std::invalid_argument("fit_gain: size mismatch");
  if (powers.size() < 3) throw std::invalid_argument("fit_gain: need at least 3 points");
  double pmax = 0.0;
  for (double p : powers) {
    if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("fit_gain: powers must be > 0");
    pmax = std::max(pmax, p);
  }
  for (double v : intensities) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_gain: non-finite intensity");
  }
  // Residual sum of squares with the amplitude solved in closed form.
  auto profile = [&](double c, double* amp) {
    double sy = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < powers.size(); ++k) {
      const double s = std::pow(std::sinh(c * std::sqrt(powers[k])), 2);
      sy += s * intensities[k];
      ss += s * s;
    }
    const double a = ss > 0.0 ? sy / ss : 0.0;
    double rss = 0.0;
    for (std::size_t k = 0; k < powers.size(); ++k) {
      const double r = intensities[k] - a * std::pow(std::sinh(c * std::sqrt(powers[k])), 2);
      rss += r * r;
    }
    if (amp) *amp = a;
    return rss;
  };
  GainFit fit;
  const double root_pmax = std::sqrt(pmax);
  const double lo = 1e-4 / root_pmax, hi = 15.0 / root_pmax;
  const int coarse = 241;
  int best = 0;
  for (int k = 0; k < coarse; ++k) {
    const double c = lo * std::pow(hi / lo, static_cast<double>(k) / (coarse - 1));
    fit.trace.emplace_back(c, profile(c, nullptr));
    if (fit.trace[k].second < fit.trace[best].second) best = k;
  }
  const double a = fit.trace[std::max(best - 1, 0)].first;
  const double b = fit.trace[std::min(best + 1, coarse - 1)].first;
  std::uintmax_t iters = 200;
  const auto [c, rss] = boost::math::tools::brent_find_minima(
      [&](double x) { return profile(x, nullptr); }, a, b, std::numeric_limits<double>::digits / 2,
      iters);
  if (iters >= 200 || !std::isfinite(rss)) {
    std::string msg = "fit_gain: minimiser did not converge; coarse scan (c, rss):";
    for (int k = std::max(best - 3, 0); k <= std::min(best + 3, coarse - 1); ++k) {
      msg += " (" + std::to_string(fit.trace[k].first) + ", " + std::to_string(fit.trace[k].second) + ")";
    }
    throw NumericError(msg);
  }
  fit.c = c;
  fit.rss = profile(c, &fit.amplitude);
  fit.gain_at_max = c * root_pmax;
  for (std::size_t k = 0; k < powers.size(); ++k) {
    fit.residuals.push_back(intensities[k] -
                            fit.amplitude * std::pow(std::sinh(c * std::sqrt(powers[k])), 2));
  }
  return fit;
}

void write_csv(std::ostream& os, const SqueezingResult& result) {
  os << "phase,psi,variance,db\n";
  os.precision(17);
  for (std::size_t k = 0; k < result.phases.size(); ++k) {
    os << result.phases[k] << ',' << result.psi[k] << ',' << result.variance[k] << ','
       << result.db[k] << '\n';
  }
}

}  // namespace su11
