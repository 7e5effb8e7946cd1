#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"

#include "su11/error.hpp"
#include "su11/estimators.hpp"
#include "su11/gaussian.hpp"
#include "su11/interferometer.hpp"
#include "su11/pipeline.hpp"

using namespace su11;

namespace {

constexpr double kPi = std::numbers::pi;

double sinh2(double g) { return std::pow(std::sinh(g), 2); }

InterferometerConfig small_config() {
  InterferometerConfig c;
  c.g1 = 1.2;
  c.g2 = 1.5;
  c.mismatch = 1.2;
  c.grid.n_theta = 24;
  c.grid.n_q = 12;
  c.grid.q_max = 8.0;
  c.pump_width = 1.6;
  c.pm_width = 4.0;
  c.gain_exponent = 0.5;
  return c;
}

InterferometerConfig single_mode(double g1, double g2) {
  InterferometerConfig c;
  c.g1 = g1;
  c.g2 = g2;
  c.single_mode = true;
  return c;
}

OAMSpectrum geometric(double r, int lmax) {
  OAMSpectrum s(lmax);
  for (int l = -lmax; l <= lmax; ++l) s.at(l) = std::pow(r, std::abs(l));
  s.normalize();
  return s;
}

double l1_distance(const OAMSpectrum& a, const OAMSpectrum& b) {
  const int lmax = std::max(a.max_l(), b.max_l());
  double d = 0.0;
  for (int l = -lmax; l <= lmax; ++l) {
    const double x = std::abs(l) <= a.max_l() ? a(l) : 0.0;
    const double y = std::abs(l) <= b.max_l() ? b(l) : 0.0;
    d += std::abs(x - y);
  }
  return d;
}

// Variance-estimate bias at the dark fringe, single mode, lossless: the
// estimate sinh^2(G2 - G1) / sinh^2(G2) against the minimum quadrature
// variance of the state after the first amplifier.
double dark_bias_db(double g1, double g2) {
  const auto scan = fringe_scan(single_mode(g1, g2), uniform_phases(3601));
  const double c = calibrate_C(fringe_scan(single_mode(0.0, g2), {0.0}));
  const auto est = quadrature_variance_estimate(scan, c);
  OpaOperation op;
  op.pairs.push_back({0, 0, g1, 0.0});
  const auto sq = apply_opa(vacuum_state(1), op);
  double vmin = 1e300;
  for (int k = 0; k < 3600; ++k) vmin = std::min(vmin, moments(sq, 0, kPi * k / 3600.0).variance);
  return std::abs(est.squeezing_db - to_db(vmin));
}

FrameStack constant_stack(int n_frames, int height, int width, float value) {
  FrameStack s;
  s.n_frames = n_frames;
  s.height = height;
  s.width = width;
  s.phases.assign(n_frames, 0.0);
  s.data.assign(static_cast<std::size_t>(n_frames) * height * width, value);
  return s;
}

}  // namespace

TEST_CASE("identical frames have zero covariance") {
  TransverseGrid g;
  g.n_theta = 16;
  g.n_q = 8;
  g.q_max = 4.0;
  auto s = constant_stack(10, 8, 16, 0.0f);
  for (std::size_t f = 0; f < 10; ++f) {
    for (std::size_t p = 0; p < s.frame_size(); ++p) s.frame(f)[p] = static_cast<float>(p % 7);
  }
  const auto cov = angular_covariance(s, g, {g.q(2), g.q(4)});
  for (const auto& ring : cov.per_ring) {
    for (double v : ring) CHECK(v == 0.0);
  }
  CHECK(cov.frame_count == 10);
}

TEST_CASE("Wick path matches the brute-force field correlators") {
  // Shifted filter, single ring: Cov(dtheta) = < |<a^dag(q0,t) a(q0,t+d)>|^2 >_t
  // from explicit mode functions on the raster.
  const auto c = small_config();
  const Interferometer ifo(c);
  const auto out = ifo.run(0.9);
  const auto [state, basis] = ifo.assemble(out, 100000);
  const auto& g = basis.grid();
  for (int iq : {2, 5}) {
    std::vector<GridPoint> pts;
    for (int t = 0; t < g.n_theta; ++t) pts.push_back({iq, t});
    const auto corr = field_correlators(state, basis, pts);
    const auto wick = angular_covariance(out, FilterTag::kShifted, {g.q(iq)}, 0);
    for (int d = 0; d < g.n_theta; ++d) {
      double ref = 0.0;
      for (int t = 0; t < g.n_theta; ++t) ref += std::norm(corr.normal(t, (t + d) % g.n_theta)) / g.n_theta;
      CHECK(wick.per_ring[0][d] == doctest::Approx(ref).epsilon(1e-9));
    }
    // The degenerate tag adds |<a a'>|^2.
    const auto deg = angular_covariance(out, FilterTag::kDegenerate, {g.q(iq)}, 0);
    for (int d = 0; d < g.n_theta; ++d) {
      double ref = 0.0;
      for (int t = 0; t < g.n_theta; ++t) {
        const int u = (t + d) % g.n_theta;
        ref += (std::norm(corr.normal(t, u)) + std::norm(corr.anomalous(t, u))) / g.n_theta;
      }
      CHECK(deg.per_ring[0][d] == doctest::Approx(ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("Monte-Carlo covariance agrees with the Wick prediction") {
  const auto c = small_config();
  const auto state = run(c);
  const auto& g = state.grid();
  const std::vector<double> rings = {g.q(3), g.q(5)};
  const auto stack = sample_frames(state, 3000, 17, {}, FilterTag::kShifted, 0.0);
  const auto mc = angular_covariance(stack, g, rings);
  const auto wick = angular_covariance(state, FilterTag::kShifted, rings);
  int outside = 0, total = 0;
  for (std::size_t r = 0; r < rings.size(); ++r) {
    for (int d = 0; d < g.n_theta; ++d) {
      ++total;
      if (std::abs(mc.per_ring[r][d] - wick.per_ring[r][d]) > 3.0 * mc.per_ring_se[r][d]) ++outside;
    }
  }
  CHECK(outside <= 2);
  CHECK(total == 48);

  OamOptions opt;
  opt.bootstrap = 100;
  const auto k_mc = oam_weights_from_covariance(mc, opt);
  const auto k_an = oam_weights_from_covariance(wick, opt);
  CHECK(k_mc.effective_modes_error > 0.0);
  CHECK(k_an.effective_modes_error == 0.0);
  CHECK(std::abs(k_mc.effective_modes - k_an.effective_modes) < 3.0 * k_mc.effective_modes_error);
}

TEST_CASE("constant covariance is a single OAM mode") {
  AngularCovariance cov;
  cov.per_ring = {std::vector<double>(32, 4.0)};
  cov.per_ring_se = {std::vector<double>(32, 0.0)};
  const auto est = oam_weights_from_covariance(cov);
  CHECK(est.spectrum(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(est.effective_modes == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("geometric spectrum round-trips through the closed-form kernel") {
  const int nt = 256;
  const double r = 0.7;
  const auto truth = geometric(r, nt / 2 - 1);
  const auto cov = covariance_from_spectrum(truth, nt);
  // Closed form of sum_l r^|l| e^{i l d} is (1 - r^2) / (1 - 2 r cos d + r^2).
  const double norm = (1.0 + r) / (1.0 - r);
  for (int d = 0; d < nt; ++d) {
    const double x = 2.0 * kPi * d / nt;
    const double kernel = (1.0 - r * r) / (1.0 - 2.0 * r * std::cos(x) + r * r) / norm;
    CHECK(cov.per_ring[0][d] == doctest::Approx(kernel * kernel).epsilon(1e-9));
  }
  const auto est = oam_weights_from_covariance(cov);
  for (int l = -20; l <= 20; ++l) CHECK(std::abs(est.spectrum(l) - truth(l)) < 1e-6);
  CHECK(est.effective_modes == doctest::Approx(10.99).epsilon(0.001));
  CHECK(est.warnings.empty());
}

TEST_CASE("ring averaging modes agree on ring-independent spectra") {
  const auto truth = geometric(0.5, 15);
  auto cov = covariance_from_spectrum(truth, 32);
  cov.per_ring.push_back(cov.per_ring[0]);
  cov.per_ring_se.push_back(cov.per_ring_se[0]);
  OamOptions a, b;
  b.averaging = RingAveraging::kCovariance;
  const auto ea = oam_weights_from_covariance(cov, a), eb = oam_weights_from_covariance(cov, b);
  CHECK(ea.effective_modes == doctest::Approx(eb.effective_modes).epsilon(1e-9));
}

TEST_CASE("noise floor clamps bins and records a warning") {
  AngularCovariance cov;
  std::vector<double> v(16, 0.01), se(16, 0.1);
  v[0] = 5.0;
  cov.per_ring = {v};
  cov.per_ring_se = {se};
  const auto est = oam_weights_from_covariance(cov);
  CHECK(est.clamped_fraction > 0.05);
  CHECK_FALSE(est.warnings.empty());
  cov.per_ring[0][3] = -3.0;
  const auto neg = oam_weights_from_covariance(cov);
  bool lobe = false;
  for (const auto& w : neg.warnings) lobe = lobe || w.find("negative") != std::string::npos;
  CHECK(lobe);
  cov.per_ring[0][4] = std::nan("");
  CHECK_THROWS_AS(oam_weights_from_covariance(cov), NumericError);
}

TEST_CASE("degenerate detection spoils the OAM inversion") {
  const auto state = run(small_config());
  const auto& g = state.grid();
  const auto rings = bright_rings(state.intensity_image(), g, 0.2);
  REQUIRE_FALSE(rings.empty());
  const auto truth = state.oam_spectrum();
  const auto shifted = oam_weights_from_covariance(angular_covariance(state, FilterTag::kShifted, rings));
  const auto degen = oam_weights_from_covariance(angular_covariance(state, FilterTag::kDegenerate, rings));
  CHECK(l1_distance(degen.spectrum, truth) > l1_distance(shifted.spectrum, truth));

  // Same comparison from frames drawn with the same seed.
  const auto fs = sample_frames(state, 1000, 9, {}, FilterTag::kShifted, 0.0);
  const auto fd = sample_frames(state, 1000, 9, {}, FilterTag::kDegenerate, 0.0);
  const auto ms = oam_weights_from_covariance(angular_covariance(fs, g, rings));
  const auto md = oam_weights_from_covariance(angular_covariance(fd, g, rings));
  CHECK(l1_distance(md.spectrum, truth) > l1_distance(ms.spectrum, truth));
}

TEST_CASE("angular covariance argument checks") {
  TransverseGrid g;
  g.n_theta = 8;
  g.n_q = 4;
  g.q_max = 4.0;
  const auto one = constant_stack(1, 4, 8, 1.0f);
  CHECK_THROWS_AS(angular_covariance(one, g, {g.q(1)}), std::invalid_argument);
  auto two = constant_stack(2, 4, 8, 1.0f);
  CHECK_THROWS_AS(angular_covariance(two, g, {10.0}), std::out_of_range);
  CHECK_THROWS_AS(angular_covariance(two, g, {}), std::invalid_argument);
  two.phases[1] = 1.0;
  CHECK_THROWS_AS(angular_covariance(two, g, {g.q(1)}), std::invalid_argument);
  auto wrong = constant_stack(2, 3, 8, 1.0f);
  CHECK_THROWS_AS(angular_covariance(wrong, g, {g.q(1)}), std::invalid_argument);
  CHECK_THROWS_AS(covariance_from_spectrum(geometric(0.5, 3), 7), std::invalid_argument);
}

TEST_CASE("bright rings") {
  TransverseGrid g;
  g.n_theta = 4;
  g.n_q = 3;
  g.q_max = 3.0;
  const std::vector<double> img = {0, 0, 0, 0, 1, 1, 1, 1, 0.1, 0.1, 0.1, 0.1};
  CHECK(bright_rings(img, g, 0.5) == std::vector<double>{g.q(1)});
  CHECK(bright_rings(img, g, 0.0).size() == 2);
}

TEST_CASE("calibration constant") {
  const double c = calibrate_C(fringe_scan(single_mode(0.0, 3.3), {0.0}));
  CHECK(c == doctest::Approx(sinh2(3.3)).epsilon(1e-9));
  CHECK(c == doctest::Approx(183.3).epsilon(1e-3));
  // Vacuum input: the phase does not matter.
  const auto scan = fringe_scan(single_mode(0.0, 3.3), uniform_phases(7));
  for (double t : scan.totals) CHECK(t == doctest::Approx(c).epsilon(1e-12));
  auto lossy = single_mode(0.0, 3.3);
  lossy.eta_det = 0.3;
  CHECK(calibrate_C(fringe_scan(lossy, {0.0})) == doctest::Approx(0.3 * c).epsilon(1e-12));
  CHECK_THROWS_AS(calibrate_C(FringeScan{}), NumericError);
  CHECK_THROWS_AS(calibrate_C(fringe_scan(single_mode(0.0, 0.0), {0.0})), NumericError);
  CHECK(calibrate_C(constant_stack(4, 2, 2, 1.5f)) == doctest::Approx(6.0));
  CHECK_THROWS_AS(calibrate_C(constant_stack(0, 2, 2, 1.0f)), NumericError);
}

TEST_CASE("dark-fringe variance estimate against the exact squeezing") {
  const auto scan = fringe_scan(single_mode(1.0, 3.0), uniform_phases(3601));
  const double c = calibrate_C(fringe_scan(single_mode(0.0, 3.0), {0.0}));
  const auto est = quadrature_variance_estimate(scan, c);
  CHECK(est.variance[std::min_element(est.variance.begin(), est.variance.end()) - est.variance.begin()] ==
        doctest::Approx(sinh2(2.0) / sinh2(3.0)).epsilon(1e-6));
  CHECK(est.squeezing_db == doctest::Approx(-8.82).epsilon(0.001));
  CHECK(to_db(std::exp(-2.0)) == doctest::Approx(-8.69).epsilon(0.001));
  CHECK(dark_bias_db(1.0, 3.0) < 0.15);
  CHECK(dark_bias_db(1.0, 2.0) > dark_bias_db(1.0, 3.0));
  CHECK(dark_bias_db(1.0, 3.0) > dark_bias_db(1.0, 4.0));
  // psi is zero at the anti-squeezed maximum and the dark fringe sits at pi/2.
  CHECK(est.phi_squeezed - est.phi_anti_squeezed == doctest::Approx(kPi).epsilon(1e-3));
  CHECK_THROWS_AS(quadrature_variance_estimate(scan, 0.0), NumericError);
  CHECK_THROWS_AS(quadrature_variance_estimate(FringeScan{}, 1.0), std::invalid_argument);
}

TEST_CASE("vacuum input reads 0 dB at every phase") {
  auto c = single_mode(0.0, 3.3);
  const auto scan = fringe_scan(c, uniform_phases(9));
  const auto est = quadrature_variance_estimate(scan, calibrate_C(scan));
  for (double db : est.db) CHECK(std::abs(db) < 1e-12);
}

TEST_CASE("detection loss cancels against the calibration") {
  for (bool multimode : {false, true}) {
    CAPTURE(multimode);
    std::vector<double> reference;
    for (double eta : {1.0, 0.5, 0.1}) {
      auto c = multimode ? small_config() : single_mode(2.1, 3.3);
      c.eta_det = eta;
      c.eta_int = 0.9;
      const auto scan = fringe_scan(c, uniform_phases(64));
      auto cal = c;
      cal.g1 = 0.0;
      const auto est = quadrature_variance_estimate(scan, calibrate_C(fringe_scan(cal, {0.0})));
      if (reference.empty()) {
        reference = est.variance;
        continue;
      }
      for (std::size_t k = 0; k < reference.size(); ++k) {
        CHECK(est.variance[k] == doctest::Approx(reference[k]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("scalar estimate from frame stacks") {
  auto cal = constant_stack(3, 2, 2, 1.0f);
  auto bright = constant_stack(3, 2, 2, 4.0f);
  bright.phases.assign(3, 0.0);
  auto dark = constant_stack(3, 2, 2, 0.25f);
  dark.phases.assign(3, kPi);
  dark.frame(0)[3] = 1.0f;
  const auto full = squeezing_from_stacks({bright, dark}, cal, Roi{});
  CHECK(full.anti_squeezing_db == doctest::Approx(to_db(4.0)));
  CHECK(full.calibration == doctest::Approx(4.0));
  const auto one = squeezing_from_stacks({bright, dark}, cal, Roi::parse("pixel(0,0)"));
  CHECK(one.squeezing_db == doctest::Approx(to_db(0.25)));
  CHECK(one.phases[1] == doctest::Approx(kPi));
  CHECK_THROWS_AS(squeezing_from_stacks({}, cal, Roi{}), std::invalid_argument);
  CHECK_THROWS_AS(squeezing_from_stacks({constant_stack(1, 3, 2, 1.0f)}, cal, Roi{}), FormatError);
  CHECK_THROWS_AS(squeezing_from_stacks({bright}, cal, Roi::parse("pixel(5,0)")), ConfigError);
}

TEST_CASE("squeezing maps") {
  SUBCASE("vacuum in both slots reads 0 dB") {
    const auto cal = constant_stack(5, 3, 4, 2.0f);
    const auto m = squeezing_map({cal, cal}, cal);
    for (double v : m.squeezing_db) CHECK(std::abs(v) < 1e-12);
    for (double v : m.anti_squeezing_db) CHECK(std::abs(v) < 1e-12);
    for (auto k : m.mask) CHECK(k == 1);
  }
  SUBCASE("dim pixels are masked to zero") {
    std::vector<double> cal = {1.0, 1.0, 1e-4, 1.0};
    const auto m = squeezing_map({{0.5, 2.0, 5e-5, 1.0}, {4.0, 0.25, 1e-3, 1.0}}, cal, 2, 2, 0.01);
    CHECK(m.mask == std::vector<std::uint8_t>{1, 1, 0, 1});
    CHECK(m.squeezing_db[2] == 0.0);
    CHECK(m.squeezing_db[0] == doctest::Approx(to_db(0.5)));
    CHECK(m.anti_squeezing_db[1] == doctest::Approx(to_db(2.0)));
    CHECK(m.squeezing_db[3] == doctest::Approx(0.0));
  }
  SUBCASE("stack and mean-image paths agree") {
    auto cal = constant_stack(4, 1, 2, 2.0f);
    auto a = constant_stack(4, 1, 2, 1.0f);
    auto b = constant_stack(4, 1, 2, 8.0f);
    const auto ms = squeezing_map({a, b}, cal);
    const auto mm = squeezing_map({{1.0, 1.0}, {8.0, 8.0}}, {2.0, 2.0}, 1, 2);
    CHECK(ms.squeezing_db == mm.squeezing_db);
    CHECK(ms.anti_squeezing_db == mm.anti_squeezing_db);
    for (double s : ms.squeezing_sigma_db) CHECK(s == 0.0);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(squeezing_map({{1.0}}, {1.0, 1.0}, 1, 2), FormatError);
    CHECK_THROWS_AS(squeezing_map({constant_stack(1, 1, 2, 1.0f)}, constant_stack(1, 1, 2, 1.0f)), FormatError);
  }
}

TEST_CASE("gain fit") {
  SUBCASE("noiseless forward model") {
    const std::vector<double> p = {0.25, 1.0, 4.0};
    std::vector<double> y;
    for (double x : p) y.push_back(sinh2(std::sqrt(x)));
    const auto fit = fit_gain(p, y);
    CHECK(fit.c == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.amplitude == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.gain_at_max == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.residuals.size() == 3);
    CHECK_FALSE(fit.trace.empty());
  }
  SUBCASE("low-power limit is linear") {
    const std::vector<double> p = {1e-6, 2e-6, 3e-6, 4e-6};
    std::vector<double> y;
    for (double x : p) y.push_back(5.0 * x);
    const auto fit = fit_gain(p, y);
    CHECK(fit.amplitude * fit.c * fit.c == doctest::Approx(5.0).epsilon(1e-3));
    for (double r : fit.residuals) CHECK(std::abs(r) < 1e-3 * 5.0 * 4e-6);
  }
  SUBCASE("argument errors") {
    CHECK_THROWS_AS(fit_gain({1.0, 2.0}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_gain({1.0, 2.0, 3.0}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_gain({1.0, 0.0, 3.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_gain({1.0, 2.0, 3.0}, {1.0, std::nan(""), 3.0}), std::invalid_argument);
  }
}

TEST_CASE("ROI parsing") {
  CHECK(Roi::parse("full").kind == Roi::Kind::kFull);
  const auto p = Roi::parse("pixel(3, 4)");
  CHECK(p.kind == Roi::Kind::kPixel);
  CHECK(p.to_string() == "pixel(3,4)");
  CHECK(p.pixels(10, 10) == std::vector<std::size_t>{43});
  const auto r = Roi::parse("rect(1,0,2,1)");
  CHECK(r.pixels(2, 4) == std::vector<std::size_t>{1, 2, 5, 6});
  CHECK(Roi::parse(r.to_string()).to_string() == "rect(1,0,2,1)");
  CHECK(Roi{}.pixels(2, 3).size() == 6);
  CHECK_THROWS_AS(Roi::parse("rect(2,0,1,1)"), ConfigError);
  CHECK_THROWS_AS(Roi::parse("circle(1)"), ConfigError);
  CHECK_THROWS_AS(Roi::parse("pixel(-1,2)"), ConfigError);
  CHECK_THROWS_AS(r.pixels(1, 4), ConfigError);
}

TEST_CASE("squeezing CSV") {
  const auto est = quadrature_variance_estimate(fringe_scan(single_mode(1.0, 2.0), {0.0, kPi}), 1.0);
  std::ostringstream os;
  write_csv(os, est);
  CHECK(os.str().rfind("phase,psi,variance,db\n", 0) == 0);
  CHECK(to_db(10.0) == doctest::Approx(10.0));
}

TEST_CASE("exact squeezing pipeline on a small multimode state") {
  auto c = small_config();
  c.g1 = 1.0;
  c.g2 = 2.5;
  const auto ex = exact_squeezing(c, 64, true);
  CHECK(ex.full.squeezing_db < 0.0);
  CHECK(ex.full.anti_squeezing_db > 0.0);
  CHECK(ex.visibility > 0.5);
  CHECK(ex.map.width == c.grid.n_theta);
  CHECK(ex.best_pixel_db <= ex.full.squeezing_db + 1e-9);
  // The calibration run blocks the first amplifier.
  CHECK(calibration_config(c).g1 == 0.0);
  CHECK(ex.calibration == doctest::Approx(FringeModel(Interferometer(calibration_config(c))).total(0.0)));
}
