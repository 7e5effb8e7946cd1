#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "su11/config.hpp"
#include "su11/error.hpp"
#include "su11/estimators.hpp"
#include "su11/interferometer.hpp"
#include "su11/kernels.hpp"
#include "su11/manifest.hpp"
#include "su11/parallel.hpp"
#include "su11/pipeline.hpp"
#include "su11/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kFormat = 3, kNumeric = 4 };

void warn(const std::string& msg) { std::cerr << "su11: warning: " << msg << "\n"; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw su11::ConfigError("--out: cannot create directory " + dir + ": " + ec.message());
}

std::string manifest_path_for(const std::string& out_file) { return out_file + ".manifest.json"; }

std::string config_hash(const std::string& config_json) { return su11::sha256_hex(config_json); }

void write_profile(const std::string& path, const std::vector<double>& image, int height, int width,
                   double phase, const std::string& hash, double q_max) {
  su11::FrameStack s;
  s.n_frames = 1;
  s.height = static_cast<std::uint32_t>(height);
  s.width = static_cast<std::uint32_t>(width);
  s.phases = {phase};
  s.data.assign(image.begin(), image.end());
  s.config_hash = hash;
  s.q_max = q_max;
  su11::write_stack(s, path);
  su11::write_sidecar(s, path + ".json");
}

void write_signed_raster(const std::string& path, const std::vector<double>& values, int height,
                         int width, const std::string& hash) {
  su11::FrameStack s;
  s.n_frames = 1;
  s.height = static_cast<std::uint32_t>(height);
  s.width = static_cast<std::uint32_t>(width);
  s.flags = su11::frame_flags::kSignedRaster;
  s.phases = {0.0};
  s.data.assign(values.begin(), values.end());
  s.config_hash = hash;
  su11::write_stack(s, path);
}

std::string spectrum_csv(const su11::OAMSpectrum& spec, const std::vector<double>* errors) {
  std::ostringstream os;
  os << (errors ? "l,weight,error\n" : "l,weight\n");
  for (int l = -spec.max_l(); l <= spec.max_l(); ++l) {
    os << l << ',' << fmt(spec(l));
    if (errors) os << ',' << fmt((*errors)[static_cast<std::size_t>(l + spec.max_l())]);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config, out;
  std::vector<double> phases;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto cfg = su11::load_config(a.config);
  const std::string cfg_json = su11::to_json(cfg);
  const std::string hash = config_hash(cfg_json);
  const auto& ic = cfg.interferometer;

  const su11::Interferometer ifo(ic);
  const su11::FringeModel model(ifo);
  const su11::FringeScan scan =
      su11::fringe_scan(model, su11::uniform_phases(cfg.estimators.scan_points));
  const double phi_dark = su11::dark_fringe(model);
  const double phi_bright = std::fmod(phi_dark + std::numbers::pi, 2.0 * std::numbers::pi);

  json results;
  results["visibility"] = su11::visibility(scan);
  results["phi_dark"] = phi_dark;
  results["phi_bright"] = phi_bright;
  results["total_bright"] = model.total(phi_bright);
  results["total_dark"] = model.total(phi_dark);
  results["pm_to_pump_ratio"] = ic.pm_width / ic.pump_width;

  const su11::FringeModel cal_model{su11::Interferometer(su11::calibration_config(ic))};
  const double cal = cal_model.total(0.0);
  std::string squeezing_csv;
  if (cal > 0.0) {
    const auto centred = su11::uniform_phases(cfg.estimators.scan_points, phi_dark - std::numbers::pi,
                                              phi_dark + std::numbers::pi);
    const auto sq = su11::quadrature_variance_estimate(su11::fringe_scan(model, centred), cal);
    results["calibration"] = cal;
    results["squeezing_db"] = sq.squeezing_db;
    results["anti_squeezing_db"] = sq.anti_squeezing_db;
    std::ostringstream os;
    su11::write_csv(os, sq);
    squeezing_csv = os.str();
  } else {
    warn("calibration intensity is zero (g2 = 0); squeezing output skipped");
  }

  std::vector<double> phases = a.phases;
  if (phases.empty()) phases = {phi_dark, phi_bright};

  // Compute everything before touching the output directory.
  std::vector<std::vector<double>> profiles;
  std::vector<std::string> spectra;
  json per_phase = json::array();
  for (double phi : phases) {
    const auto state = model.at(phi);
    if (ic.single_mode) {
      profiles.push_back({state.total_photons()});
      per_phase.push_back({{"phi", phi}, {"total", state.total_photons()}});
      continue;
    }
    profiles.push_back(su11::intensity_profile(state));
    if (!(state.total_photons() > 1e-12)) {
      per_phase.push_back({{"phi", phi}, {"total", state.total_photons()}, {"effective_oam_modes", nullptr}});
      spectra.emplace_back();
      continue;
    }
    auto spec = state.oam_spectrum();
    per_phase.push_back({{"phi", phi},
                         {"total", state.total_photons()},
                         {"effective_oam_modes", su11::effective_mode_number(spec)}});
    spectra.push_back(spectrum_csv(spec, nullptr));
  }
  results["profiles"] = per_phase;
  if (!ic.single_mode) {
    results["first_pass_effective_oam_modes"] = su11::effective_mode_number(ifo.first_pass_spectrum());
  }

  ensure_dir(a.out);
  su11::RunManifest manifest("simulate", cfg.seed, cfg_json);
  std::ostringstream fringe;
  su11::write_csv(fringe, scan);
  const std::string fringe_path = (fs::path(a.out) / "fringe.csv").string();
  su11::atomic_write(fringe_path, fringe.str());
  manifest.add_output(fringe_path);
  if (!squeezing_csv.empty()) {
    const std::string p = (fs::path(a.out) / "squeezing.csv").string();
    su11::atomic_write(p, squeezing_csv);
    manifest.add_output(p);
  }
  const int height = ic.single_mode ? 1 : ic.grid.n_q;
  const int width = ic.single_mode ? 1 : ic.grid.n_theta;
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const std::string p = (fs::path(a.out) / ("profile_phi" + std::to_string(k) + ".f32")).string();
    write_profile(p, profiles[k], height, width, phases[k], hash, ic.single_mode ? 0.0 : ic.grid.q_max);
    manifest.add_output(p);
    if (k < spectra.size() && !spectra[k].empty()) {
      const std::string sp = (fs::path(a.out) / ("oam_phi" + std::to_string(k) + ".csv")).string();
      su11::atomic_write(sp, spectra[k]);
      manifest.add_output(sp);
    }
  }
  manifest.extra() = results;
  manifest.write((fs::path(a.out) / "manifest.json").string());
  std::cout << "visibility " << fmt(results["visibility"].get<double>()) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct FramesArgs {
  std::string config, out;
  int frames = 500;
  std::optional<std::uint64_t> seed;
  std::vector<double> phases;
  bool from_dark = false;
  bool calibration = false;
};

int cmd_generate_frames(const FramesArgs& a) {
  auto cfg = su11::load_config(a.config);
  if (a.frames < 0) throw su11::ConfigError("--frames: must be >= 0");
  if (a.seed) cfg.seed = *a.seed;
  const std::string cfg_json = su11::to_json(cfg);
  const std::string hash = config_hash(cfg_json);

  su11::InterferometerConfig ic = cfg.interferometer;
  if (ic.single_mode) throw su11::ConfigError("generate-frames: single-mode configs have no spatial raster");
  if (a.calibration) ic = su11::calibration_config(ic);
  const su11::Interferometer ifo(ic);
  const su11::FringeModel model(ifo);

  std::vector<double> phases = a.phases.empty() ? std::vector<double>{ic.phi} : a.phases;
  if (a.calibration) phases = {0.0};
  if (a.from_dark && !a.calibration) phases = su11::offsets_from(su11::dark_fringe(model), phases);

  std::vector<su11::FrameStack> stacks;
  std::vector<std::string> warnings;
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const std::uint64_t seed = cfg.seed + k;
    auto stack = su11::sample_frames(model.at(phases[k]), a.frames, seed, cfg.detector, cfg.filter,
                                     phases[k], &warnings);
    if (a.calibration) stack.flags |= su11::frame_flags::kCalibration;
    stack.config_hash = hash;
    stacks.push_back(std::move(stack));
  }
  for (const auto& w : warnings) warn(w);

  su11::RunManifest manifest("generate-frames", cfg.seed, cfg_json);
  std::string manifest_path;
  if (stacks.size() == 1) {
    if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path().string());
    su11::write_stack(stacks[0], a.out);
    su11::write_sidecar(stacks[0], a.out + ".json");
    manifest.add_output(a.out);
    manifest_path = manifest_path_for(a.out);
  } else {
    ensure_dir(a.out);
    for (std::size_t k = 0; k < stacks.size(); ++k) {
      const std::string p = (fs::path(a.out) / ("frames_" + std::to_string(k) + ".f32")).string();
      su11::write_stack(stacks[k], p);
      su11::write_sidecar(stacks[k], p + ".json");
      manifest.add_output(p);
    }
    manifest_path = (fs::path(a.out) / "manifest.json").string();
  }
  manifest.extra()["phases"] = phases;
  manifest.extra()["frames"] = a.frames;
  manifest.extra()["calibration"] = a.calibration;
  manifest.extra()["simd"] = su11::kernels::to_string(su11::kernels::active_isa());
  manifest.extra()["warnings"] = warnings;
  manifest.write(manifest_path);
  return kOk;
}

// ---------------------------------------------------------------------------

struct OamArgs {
  std::string stack, out, config;
  std::optional<std::uint64_t> seed;
};

int cmd_estimate_oam(const OamArgs& a) {
  su11::SimulationConfig cfg;
  std::string cfg_json = "{}";
  if (!a.config.empty()) {
    cfg = su11::load_config(a.config);
    cfg_json = su11::to_json(cfg);
  }
  const auto stack = su11::read_stack(a.stack);
  if (stack.n_frames < 2) throw su11::FormatError("estimate-oam: need at least 2 frames");
  su11::TransverseGrid grid;
  grid.n_q = static_cast<int>(stack.height);
  grid.n_theta = static_cast<int>(stack.width);
  grid.q_max = stack.q_max > 0.0 ? stack.q_max : cfg.interferometer.grid.q_max;
  if (!a.config.empty() && (cfg.interferometer.grid.n_q != grid.n_q ||
                            cfg.interferometer.grid.n_theta != grid.n_theta)) {
    throw su11::FormatError("estimate-oam: stack raster differs from the config grid");
  }
  grid.validate();

  const auto& es = cfg.estimators;
  std::vector<double> q0 = es.q0_mrad;
  if (q0.empty()) q0 = su11::bright_rings(su11::frame_mean(stack), grid, es.ring_floor);
  const auto cov = su11::angular_covariance(stack, grid, q0, es.ring_halfwidth);
  su11::OamOptions opt = es.oam;
  opt.seed = a.seed.value_or(cfg.seed);
  const auto est = su11::oam_weights_from_covariance(cov, opt);
  for (const auto& w : est.warnings) warn(w);

  if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path().string());
  su11::atomic_write(a.out, spectrum_csv(est.spectrum, &est.errors));
  json side;
  side["effective_modes"] = est.effective_modes;
  side["effective_modes_error"] = est.effective_modes_error;
  side["clamped_fraction"] = est.clamped_fraction;
  side["frames"] = cov.frame_count;
  side["rings_mrad"] = cov.q0;
  side["warnings"] = est.warnings;
  side["input"] = {{"path", fs::path(a.stack).filename().string()}, {"sha256", su11::sha256_file(a.stack)}};
  su11::atomic_write(a.out + ".json", side.dump(2) + "\n");

  su11::RunManifest manifest("estimate-oam", opt.seed, cfg_json);
  manifest.add_output(a.out);
  manifest.add_output(a.out + ".json");
  manifest.extra() = side;
  manifest.write(manifest_path_for(a.out));
  std::cout << "effective_modes " << fmt(est.effective_modes) << " +- " << fmt(est.effective_modes_error)
            << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct SqueezeArgs {
  std::string scan_dir, calib, out, roi = "full", config;
  bool map = false;
};

int cmd_estimate_squeezing(const SqueezeArgs& a) {
  su11::SimulationConfig cfg;
  std::string cfg_json = "{}";
  if (!a.config.empty()) {
    cfg = su11::load_config(a.config);
    cfg_json = su11::to_json(cfg);
  }
  const auto roi = su11::Roi::parse(a.roi);
  if (!fs::is_directory(a.scan_dir)) throw su11::ConfigError("--scan-dir: not a directory: " + a.scan_dir);
  const auto calibration = su11::read_stack(a.calib);

  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(a.scan_dir)) {
    if (e.path().extension() != ".f32") continue;
    if (fs::exists(a.calib) && fs::equivalent(e.path(), a.calib)) continue;
    files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<su11::FrameStack> stacks;
  for (const auto& f : files) {
    auto s = su11::read_stack(f);
    if (s.flags & (su11::frame_flags::kCalibration | su11::frame_flags::kSignedRaster)) continue;
    stacks.push_back(std::move(s));
  }
  if (stacks.empty()) throw su11::FormatError("--scan-dir: no phase stacks found in " + a.scan_dir);
  std::sort(stacks.begin(), stacks.end(), [](const auto& x, const auto& y) {
    return x.phases.front() < y.phases.front();
  });
  for (const auto& s : stacks) {
    if (s.filter() != calibration.filter()) throw su11::FormatError("scan and calibration filters differ");
  }

  const auto res = su11::squeezing_from_stacks(stacks, calibration, roi);
  std::optional<su11::SqueezingMap> map;
  if (a.map) map = su11::squeezing_map(stacks, calibration, cfg.estimators.intensity_floor);

  ensure_dir(a.out);
  su11::RunManifest manifest("estimate-squeezing", calibration.seed, cfg_json);
  std::ostringstream os;
  su11::write_csv(os, res);
  const std::string csv = (fs::path(a.out) / "squeezing.csv").string();
  su11::atomic_write(csv, os.str());
  manifest.add_output(csv);

  json summary;
  summary["roi"] = roi.to_string();
  summary["calibration"] = res.calibration;
  summary["squeezing_db"] = res.squeezing_db;
  summary["anti_squeezing_db"] = res.anti_squeezing_db;
  summary["phi_squeezed"] = res.phi_squeezed;
  summary["phi_anti_squeezed"] = res.phi_anti_squeezed;
  summary["stacks"] = files.size();
  if (map) {
    const std::string hash = calibration.config_hash;
    const auto base = fs::path(a.out);
    write_signed_raster((base / "map_squeezing_db.f32").string(), map->squeezing_db, map->height,
                        map->width, hash);
    write_signed_raster((base / "map_anti_squeezing_db.f32").string(), map->anti_squeezing_db,
                        map->height, map->width, hash);
    write_signed_raster((base / "map_sigma_db.f32").string(), map->squeezing_sigma_db, map->height,
                        map->width, hash);
    json side;
    side["height"] = map->height;
    side["width"] = map->width;
    side["mask"] = map->mask;
    side["calibration"] = map->calibration;
    side["config_hash"] = hash;
    side["intensity_floor"] = cfg.estimators.intensity_floor;
    su11::atomic_write((base / "map.json").string(), side.dump() + "\n");
    for (const char* f : {"map_squeezing_db.f32", "map_anti_squeezing_db.f32", "map_sigma_db.f32", "map.json"}) {
      manifest.add_output((base / f).string());
    }
  }
  const std::string sj = (fs::path(a.out) / "squeezing.json").string();
  su11::atomic_write(sj, summary.dump(2) + "\n");
  manifest.add_output(sj);
  manifest.extra() = summary;
  manifest.write((fs::path(a.out) / "manifest.json").string());
  std::cout << "squeezing_db " << fmt(res.squeezing_db) << " anti_squeezing_db "
            << fmt(res.anti_squeezing_db) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct GainArgs {
  std::string in, out;
};

int cmd_fit_gain(const GainArgs& a) {
  std::ifstream is(a.in);
  if (!is) throw su11::ConfigError("--in: cannot open " + a.in);
  std::vector<double> powers, intensities;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double p = 0.0, v = 0.0;
    if (!(ls >> p >> v)) {
      if (lineno == 1) continue;  // header
      throw su11::FormatError(a.in + ":" + std::to_string(lineno) + ": expected 'power,intensity'");
    }
    powers.push_back(p);
    intensities.push_back(v);
  }
  su11::GainFit fit;
  try {
    fit = su11::fit_gain(powers, intensities);
  } catch (const std::invalid_argument& e) {
    throw su11::FormatError(std::string(a.in) + ": " + e.what());
  }
  json j;
  j["c"] = fit.c;
  j["amplitude"] = fit.amplitude;
  j["gain_at_max"] = fit.gain_at_max;
  j["rss"] = fit.rss;
  j["residuals"] = fit.residuals;
  j["input"] = {{"path", fs::path(a.in).filename().string()}, {"sha256", su11::sha256_file(a.in)}};
  if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path().string());
  su11::atomic_write(a.out, j.dump(2) + "\n");
  su11::RunManifest manifest("fit-gain", 0, "{}");
  manifest.add_output(a.out);
  manifest.extra() = j;
  manifest.write(manifest_path_for(a.out));
  std::cout << "G " << fmt(fit.gain_at_max) << " c " << fmt(fit.c) << " A " << fmt(fit.amplitude) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct OperatingArgs {
  std::string config, out;
  std::vector<double> eta_range{0.80, 1.0};
  int steps = 21;
  double target_sq = -2.6, target_anti = 13.2;
};

int cmd_fit_operating_point(const OperatingArgs& a) {
  const auto cfg = su11::load_config(a.config);
  if (a.eta_range.size() != 2 || !(a.eta_range[0] > 0.0) || a.eta_range[1] > 1.0 ||
      a.eta_range[1] < a.eta_range[0]) {
    throw su11::ConfigError("--eta-range: expected lo,hi with 0 < lo <= hi <= 1");
  }
  if (a.steps < 1) throw su11::ConfigError("--steps: must be >= 1");

  json trace = json::array();
  double best_cost = INFINITY, best_eta = a.eta_range[1];
  for (int k = 0; k < a.steps; ++k) {
    su11::InterferometerConfig ic = cfg.interferometer;
    ic.eta_int = a.steps == 1 ? a.eta_range[1]
                              : a.eta_range[0] + (a.eta_range[1] - a.eta_range[0]) * k / (a.steps - 1);
    const auto r = su11::exact_squeezing(ic, cfg.estimators.scan_points);
    const double cost = std::pow((r.full.squeezing_db - a.target_sq) / 0.6, 2) +
                        std::pow((r.full.anti_squeezing_db - a.target_anti) / 0.5, 2);
    trace.push_back({{"eta_int", ic.eta_int},
                     {"squeezing_db", r.full.squeezing_db},
                     {"anti_squeezing_db", r.full.anti_squeezing_db},
                     {"cost", cost}});
    if (cost < best_cost) {
      best_cost = cost;
      best_eta = ic.eta_int;
    }
  }
  su11::SimulationConfig fitted = cfg;
  fitted.interferometer.eta_int = best_eta;
  const auto best = su11::exact_squeezing(fitted.interferometer, cfg.estimators.scan_points, true,
                                          cfg.estimators.intensity_floor);

  json j;
  j["eta_int"] = best_eta;
  j["cost"] = best_cost;
  j["targets"] = {{"squeezing_db", a.target_sq}, {"anti_squeezing_db", a.target_anti}};
  j["squeezing_db"] = best.full.squeezing_db;
  j["anti_squeezing_db"] = best.full.anti_squeezing_db;
  j["visibility"] = best.visibility;
  j["phi_dark"] = best.phi_dark;
  j["best_pixel"] = {{"x", best.best_pixel_x}, {"y", best.best_pixel_y}, {"squeezing_db", best.best_pixel_db}};
  j["model"] = {{"gain_exponent", fitted.interferometer.gain_exponent},
                {"pm_chirp", fitted.interferometer.pm_chirp},
                {"pm_to_pump_ratio", fitted.interferometer.pm_width / fitted.interferometer.pump_width}};
  j["trace"] = trace;

  ensure_dir(a.out);
  su11::RunManifest manifest("fit-operating-point", fitted.seed, su11::to_json(fitted));
  std::ostringstream os;
  su11::write_csv(os, best.full);
  const std::string csv = (fs::path(a.out) / "squeezing.csv").string();
  su11::atomic_write(csv, os.str());
  manifest.add_output(csv);
  const std::string jp = (fs::path(a.out) / "operating_point.json").string();
  su11::atomic_write(jp, j.dump(2) + "\n");
  manifest.add_output(jp);
  manifest.extra() = j;
  manifest.write((fs::path(a.out) / "manifest.json").string());
  std::cout << "eta_int " << fmt(best_eta) << " squeezing_db " << fmt(best.full.squeezing_db)
            << " anti_squeezing_db " << fmt(best.full.anti_squeezing_db) << " best_pixel_db "
            << fmt(best.best_pixel_db) << "\n";
  return kOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const su11::ConfigError& e) {
    std::cerr << "su11: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const su11::FormatError& e) {
    std::cerr << "su11: format error: " << e.what() << "\n";
    return kFormat;
  } catch (const su11::NumericError& e) {
    std::cerr << "su11: numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const su11::ResolutionError& e) {
    std::cerr << "su11: numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::domain_error& e) {
    std::cerr << "su11: numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "su11: error: " << e.what() << "\n";
    return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wide-field SU(1,1) interferometer simulator and estimators"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Fringe scan, intensity profiles and exact squeezing");
  c_sim->add_option("--config", sim.config, "JSON config")->required();
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--phases", sim.phases, "Profile phases in radians (default: dark,bright)")
      ->delimiter(',');

  FramesArgs frm;
  auto* c_frm = app.add_subcommand("generate-frames", "Sample camera frames");
  c_frm->add_option("--config", frm.config, "JSON config")->required();
  c_frm->add_option("--out", frm.out, "Output stack (one phase) or directory (several)")->required();
  c_frm->add_option("--frames", frm.frames, "Frames per phase")->capture_default_str();
  c_frm->add_option("--seed", frm.seed, "Overrides the config seed");
  c_frm->add_option("--phases", frm.phases, "Pump phases in radians")->delimiter(',');
  c_frm->add_flag("--from-dark", frm.from_dark, "Phases are offsets from the dark fringe");
  c_frm->add_flag("--calibration", frm.calibration, "Seeded-vacuum calibration run (g1 = 0)");

  OamArgs oam;
  auto* c_oam = app.add_subcommand("estimate-oam", "OAM weights from angular intensity correlations");
  c_oam->add_option("--in", oam.stack, "Frame stack")->required();
  c_oam->add_option("--out", oam.out, "Output CSV")->required();
  c_oam->add_option("--config", oam.config, "JSON config (estimator settings, grid)");
  c_oam->add_option("--seed", oam.seed, "Bootstrap seed");

  SqueezeArgs sq;
  auto* c_sq = app.add_subcommand("estimate-squeezing", "Quadrature variance from phase-scanned stacks");
  c_sq->add_option("--scan-dir", sq.scan_dir, "Directory of phase stacks")->required();
  c_sq->add_option("--calib", sq.calib, "Calibration stack")->required();
  c_sq->add_option("--out", sq.out, "Output directory")->required();
  c_sq->add_option("--roi", sq.roi, "full | pixel(x,y) | rect(x0,y0,x1,y1)")->capture_default_str();
  c_sq->add_option("--config", sq.config, "JSON config (estimator settings)");
  c_sq->add_flag("--map", sq.map, "Also write per-pixel maps");

  GainArgs gain;
  auto* c_gain = app.add_subcommand("fit-gain", "Fit A sinh^2(c sqrt(P)) to a power series");
  c_gain->add_option("--in", gain.in, "CSV with columns power,intensity")->required();
  c_gain->add_option("--out", gain.out, "Output JSON")->required();

  OperatingArgs op;
  auto* c_op = app.add_subcommand("fit-operating-point", "Scan eta_int against squeezing targets");
  c_op->add_option("--config", op.config, "JSON config")->required();
  c_op->add_option("--out", op.out, "Output directory")->required();
  c_op->add_option("--eta-range", op.eta_range, "lo,hi")->delimiter(',')->expected(2);
  c_op->add_option("--steps", op.steps, "Grid points")->capture_default_str();
  c_op->add_option("--target-squeezing", op.target_sq)->capture_default_str();
  c_op->add_option("--target-anti-squeezing", op.target_anti)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*c_sim) return guarded([&] { return cmd_simulate(sim); });
  if (*c_frm) return guarded([&] { return cmd_generate_frames(frm); });
  if (*c_oam) return guarded([&] { return cmd_estimate_oam(oam); });
  if (*c_sq) return guarded([&] { return cmd_estimate_squeezing(sq); });
  if (*c_gain) return guarded([&] { return cmd_fit_gain(gain); });
  if (*c_op) return guarded([&] { return cmd_fit_operating_point(op); });
  return kOther;
}
