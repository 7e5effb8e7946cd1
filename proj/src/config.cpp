#include "su11/config.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

#include "su11/error.hpp"

namespace su11 {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(prefix + key + ": unknown key");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& prefix) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + key + ": wrong type (" + obj.at(key).dump() + ")");
  }
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  if (!root.at(key).is_object()) throw ConfigError(std::string(key) + ": expected an object");
  return root.at(key);
}

std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

SimulationConfig parse_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": syntax error at " + position(text, e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(source + ": top level must be an object");
  reject_unknown(root,
                 {"g1", "g2", "phi", "eta_int", "eta_det", "mismatch", "grid", "pump_width", "pm_width",
                  "seed", "model", "detector", "sampler", "estimators", "comment"},
                 "");
  SimulationConfig c;
  auto& ic = c.interferometer;
  read(root, "g1", ic.g1, "");
  read(root, "g2", ic.g2, "");
  read(root, "phi", ic.phi, "");
  read(root, "eta_int", ic.eta_int, "");
  read(root, "eta_det", ic.eta_det, "");
  read(root, "mismatch", ic.mismatch, "");
  read(root, "pump_width", ic.pump_width, "");
  read(root, "pm_width", ic.pm_width, "");
  read(root, "seed", c.seed, "");

  const json& grid = section(root, "grid");
  reject_unknown(grid, {"n_theta", "n_q", "q_max_mrad"}, "grid.");
  read(grid, "n_theta", ic.grid.n_theta, "grid.");
  read(grid, "n_q", ic.grid.n_q, "grid.");
  read(grid, "q_max_mrad", ic.grid.q_max, "grid.");

  const json& model = section(root, "model");
  reject_unknown(model, {"gain_exponent", "pm_chirp", "max_oam", "single_mode", "oam_phase"}, "model.");
  read(model, "gain_exponent", ic.gain_exponent, "model.");
  read(model, "pm_chirp", ic.pm_chirp, "model.");
  read(model, "max_oam", ic.max_oam, "model.");
  read(model, "single_mode", ic.single_mode, "model.");
  if (model.contains("oam_phase")) {
    const json& op = model.at("oam_phase");
    if (!op.is_object()) throw ConfigError("model.oam_phase: expected an object {\"l\": phase}");
    for (const auto& [key, value] : op.items()) {
      int l = 0;
      try {
        std::size_t used = 0;
        l = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ConfigError("model.oam_phase." + key + ": key must be an integer OAM index");
      }
      if (!value.is_number()) throw ConfigError("model.oam_phase." + key + ": expected a number");
      ic.oam_phase[l] = value.get<double>();
    }
  }

  const json& det = section(root, "detector");
  reject_unknown(det, {"efficiency", "read_noise", "saturation"}, "detector.");
  read(det, "efficiency", c.detector.efficiency, "detector.");
  read(det, "read_noise", c.detector.read_noise, "detector.");
  if (det.contains("saturation") && !det.at("saturation").is_null()) {
    double s = 0.0;
    read(det, "saturation", s, "detector.");
    c.detector.saturation = s;
  }

  const json& smp = section(root, "sampler");
  reject_unknown(smp, {"filter"}, "sampler.");
  if (smp.contains("filter")) {
    std::string f;
    read(smp, "filter", f, "sampler.");
    c.filter = filter_from_string(f);
  }

  const json& est = section(root, "estimators");
  reject_unknown(est,
                 {"q0_mrad", "ring_floor", "ring_halfwidth", "noise_floor_sigmas", "bootstrap",
                  "averaging", "max_l", "intensity_floor", "scan_points"},
                 "estimators.");
  auto& e = c.estimators;
  read(est, "q0_mrad", e.q0_mrad, "estimators.");
  read(est, "ring_floor", e.ring_floor, "estimators.");
  read(est, "ring_halfwidth", e.ring_halfwidth, "estimators.");
  read(est, "noise_floor_sigmas", e.oam.noise_floor_sigmas, "estimators.");
  read(est, "bootstrap", e.oam.bootstrap, "estimators.");
  read(est, "max_l", e.oam.max_l, "estimators.");
  read(est, "intensity_floor", e.intensity_floor, "estimators.");
  read(est, "scan_points", e.scan_points, "estimators.");
  if (est.contains("averaging")) {
    std::string a;
    read(est, "averaging", a, "estimators.");
    if (a == "root_per_ring") {
      e.oam.averaging = RingAveraging::kRootPerRing;
    } else if (a == "covariance") {
      e.oam.averaging = RingAveraging::kCovariance;
    } else {
      throw ConfigError("estimators.averaging: expected 'root_per_ring' or 'covariance'");
    }
  }
  e.oam.seed = c.seed;

  ic.validate();
  c.detector.validate();
  if (e.ring_halfwidth < 0) throw ConfigError("estimators.ring_halfwidth: must be >= 0");
  if (e.oam.bootstrap < 0) throw ConfigError("estimators.bootstrap: must be >= 0");
  if (e.scan_points < 3) throw ConfigError("estimators.scan_points: must be >= 3");
  if (!(e.intensity_floor >= 0.0 && e.intensity_floor < 1.0)) {
    throw ConfigError("estimators.intensity_floor: must lie in [0,1)");
  }
  if (!(e.ring_floor >= 0.0 && e.ring_floor < 1.0)) {
    throw ConfigError("estimators.ring_floor: must lie in [0,1)");
  }
  for (double q : e.q0_mrad) {
    if (!(q > 0.0 && q < ic.grid.q_max)) throw ConfigError("estimators.q0_mrad: ring outside the grid");
  }
  return c;
}

SimulationConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_config(text, path);
}

std::string to_json(const SimulationConfig& c) {
  const auto& ic = c.interferometer;
  json j;
  j["g1"] = ic.g1;
  j["g2"] = ic.g2;
  j["phi"] = ic.phi;
  j["eta_int"] = ic.eta_int;
  j["eta_det"] = ic.eta_det;
  j["mismatch"] = ic.mismatch;
  j["grid"] = {{"n_theta", ic.grid.n_theta}, {"n_q", ic.grid.n_q}, {"q_max_mrad", ic.grid.q_max}};
  j["pump_width"] = ic.pump_width;
  j["pm_width"] = ic.pm_width;
  j["seed"] = c.seed;
  json phases = json::object();
  for (const auto& [l, p] : ic.oam_phase) phases[std::to_string(l)] = p;
  j["model"] = {{"gain_exponent", ic.gain_exponent}, {"pm_chirp", ic.pm_chirp},
                {"max_oam", ic.max_oam},             {"single_mode", ic.single_mode},
                {"oam_phase", phases}};
  j["detector"] = {{"efficiency", c.detector.efficiency},
                   {"read_noise", c.detector.read_noise},
                   {"saturation", c.detector.saturation ? json(*c.detector.saturation) : json(nullptr)}};
  j["sampler"] = {{"filter", to_string(c.filter)}};
  const auto& e = c.estimators;
  j["estimators"] = {
      {"q0_mrad", e.q0_mrad},
      {"ring_floor", e.ring_floor},
      {"ring_halfwidth", e.ring_halfwidth},
      {"noise_floor_sigmas", e.oam.noise_floor_sigmas},
      {"bootstrap", e.oam.bootstrap},
      {"averaging", e.oam.averaging == RingAveraging::kRootPerRing ? "root_per_ring" : "covariance"},
      {"max_l", e.oam.max_l},
      {"intensity_floor", e.intensity_floor},
      {"scan_points", e.scan_points}};
  return j.dump(2);
}

}  // namespace su11
