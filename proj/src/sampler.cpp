#include "su11/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include "json.hpp"

#include "su11/error.hpp"
#include "su11/kernels.hpp"
#include "su11/parallel.hpp"

namespace su11 {

namespace {

constexpr char kMagic[8] = {'S', 'U', '1', '1', 'F', 'R', 'M', '1'};
constexpr std::size_t kHeaderBytes = 8 + 4 * 4;

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

template <class T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(p[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Real form of z -> C z acting on (Re z, Im z).
Eigen::MatrixXd realify(const Eigen::MatrixXcd& c) {
  const Eigen::Index d = c.rows();
  Eigen::MatrixXd r(2 * d, 2 * d);
  r << c.real(), -c.imag(), c.imag(), c.real();
  return r;
}

// Real covariance of (Re z, Im z) for a complex Gaussian with
// E[z_i^* z_j] = normal_ij and E[z_i z_j] = anomalous_ij, factored as F F^T.
// Quantum anomalous moments can exceed what a classical field allows
// (|m| = sqrt(n(n+1)) > n for squeezed vacuum). In coordinates whitened by
// the phase-insensitive part the phase-sensitive part has eigenvalues +-w;
// capping them at +-1 keeps the normal moments, and hence every mean
// intensity, exact.
Eigen::MatrixXd classical_factor(const Eigen::MatrixXcd& normal, const Eigen::MatrixXcd& anomalous,
                                 double* top) {
  const Eigen::Index d = normal.rows();
  // Phase-insensitive part is realify(conj(normal)) / 2.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> en(0.5 * (normal + normal.adjoint()).conjugate());
  if (en.info() != Eigen::Success) throw NumericError("sampler: eigensolver failed");
  const Eigen::VectorXd& n = en.eigenvalues();
  const double nmax = std::max(0.0, d ? n.maxCoeff() : 0.0);
  if (top) *top = std::max(*top, nmax);
  // Rounding noise on an empty sector must not become light.
  const double tol = 1e-13 * nmax + 1e-14;
  Eigen::VectorXd root(d), inv_root(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    root[k] = n[k] > tol ? std::sqrt(0.5 * n[k]) : 0.0;
    inv_root[k] = n[k] > tol ? 1.0 / root[k] : 0.0;
  }
  const Eigen::MatrixXcd& v = en.eigenvectors();
  const Eigen::MatrixXd s = realify(v * root.asDiagonal() * v.adjoint());
  const Eigen::MatrixXd s_inv = realify(v * inv_root.asDiagonal() * v.adjoint());

  Eigen::MatrixXd sm(2 * d, 2 * d);
  sm << 0.5 * anomalous.real(), 0.5 * anomalous.imag(), 0.5 * anomalous.imag(), -0.5 * anomalous.real();
  const Eigen::MatrixXd w = s_inv * sm * s_inv;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ew(0.5 * (w + w.transpose()));
  if (ew.info() != Eigen::Success) throw NumericError("sampler: eigensolver failed");
  // Sigma = s (1 + W) s with W's eigenvalues capped to [-1, 1].
  Eigen::MatrixXd cols = s * ew.eigenvectors();
  double cmax = 0.0;
  for (Eigen::Index k = 0; k < cols.cols(); ++k) {
    const double lam = 1.0 + std::clamp(ew.eigenvalues()[k], -1.0, 1.0);
    cols.col(k) *= std::sqrt(lam);
    cmax = std::max(cmax, cols.col(k).squaredNorm());
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < cols.cols(); ++k) {
    if (cols.col(k).squaredNorm() > 1e-13 * cmax + 1e-14) keep.push_back(k);
  }
  Eigen::MatrixXd f(2 * d, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) f.col(static_cast<Eigen::Index>(c)) = cols.col(keep[c]);
  return f;
}

void apply_detector(const DetectorModel& det, std::mt19937_64& rng, const double* in, float* out,
                    std::size_t n) {
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double v = det.efficiency * in[i];
    if (det.read_noise > 0.0) v += det.read_noise * noise(rng);
    v = std::max(0.0, v);
    if (det.saturation) v = std::min(v, *det.saturation);
    out[i] = static_cast<float>(v);
  }
}

void check_physical(const GaussianState& s) {
  if (!s.is_physical(1e-6)) throw NumericError("sampler: state violates the uncertainty relation");
}

void low_gain_warning(double photons, std::vector<std::string>* warnings) {
  if (warnings && photons < 1.0) {
    warnings->push_back("semiclassical sampler outside the high-gain regime (dominant mode holds " +
                        std::to_string(photons) + " photons)");
  }
}

FrameStack empty_like(std::uint32_t n_frames, std::uint32_t height, std::uint32_t width,
                      std::uint64_t seed, FilterTag filter, double phase_tag) {
  FrameStack stack;
  stack.n_frames = n_frames;
  stack.height = height;
  stack.width = width;
  stack.flags = filter == FilterTag::kShifted ? frame_flags::kShifted : 0u;
  stack.phases.assign(n_frames, phase_tag);
  stack.data.assign(static_cast<std::size_t>(n_frames) * height * width, 0.0f);
  stack.seed = seed;
  return stack;
}

}  // namespace

std::string to_string(FilterTag tag) { return tag == FilterTag::kShifted ? "shifted" : "degenerate"; }

FilterTag filter_from_string(const std::string& name) {
  if (name == "shifted") return FilterTag::kShifted;
  if (name == "degenerate") return FilterTag::kDegenerate;
  throw ConfigError("sampler.filter: expected 'degenerate' or 'shifted', got '" + name + "'");
}

void DetectorModel::validate() const {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) {
    throw ConfigError("detector.efficiency: must lie in [0,1]");
  }
  if (!(read_noise >= 0.0) || !std::isfinite(read_noise)) {
    throw ConfigError("detector.read_noise: must be >= 0");
  }
  if (saturation && !(*saturation > 0.0)) throw ConfigError("detector.saturation: must be > 0");
}

void FrameStack::validate() const {
  if (phases.size() != n_frames) throw FormatError("frame stack: one phase tag per frame required");
  if (data.size() != static_cast<std::size_t>(n_frames) * frame_size()) {
    throw FormatError("frame stack: data size does not match dimensions");
  }
  for (double p : phases) {
    if (!std::isfinite(p)) throw FormatError("frame stack: non-finite phase tag");
  }
  const bool signed_ok = (flags & frame_flags::kSignedRaster) != 0;
  for (float v : data) {
    if (!std::isfinite(v) || (!signed_ok && v < 0.0f)) {
      throw FormatError("frame stack: negative or non-finite intensity");
    }
  }
}

std::vector<unsigned char> encode_stack(const FrameStack& stack) {
  stack.validate();
  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + 8 * stack.phases.size() + 4 * stack.data.size());
  for (char ch : kMagic) out.push_back(static_cast<unsigned char>(ch));
  put_le(out, stack.n_frames);
  put_le(out, stack.height);
  put_le(out, stack.width);
  put_le(out, stack.flags);
  for (double p : stack.phases) put_le(out, p);
  for (float v : stack.data) put_le(out, v);
  return out;
}

FrameStack decode_stack(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("frame stack: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("frame stack: bad magic");
  FrameStack s;
  const unsigned char* p = bytes.data() + 8;
  s.n_frames = get_le<std::uint32_t>(p);
  s.height = get_le<std::uint32_t>(p + 4);
  s.width = get_le<std::uint32_t>(p + 8);
  s.flags = get_le<std::uint32_t>(p + 12);
  std::uint64_t pixels = 0, values = 0, payload = 0, expected = 0;
  if (__builtin_mul_overflow(static_cast<std::uint64_t>(s.height), s.width, &pixels) ||
      __builtin_mul_overflow(pixels, static_cast<std::uint64_t>(s.n_frames), &values) ||
      __builtin_mul_overflow(values, std::uint64_t{4}, &payload) ||
      __builtin_add_overflow(payload, kHeaderBytes + 8ull * s.n_frames, &expected)) {
    throw FormatError("frame stack: dimension overflow");
  }
  if (bytes.size() < expected) throw FormatError("frame stack: truncated data");
  if (bytes.size() > expected) throw FormatError("frame stack: trailing bytes after data");
  p = bytes.data() + kHeaderBytes;
  s.phases.resize(s.n_frames);
  for (auto& ph : s.phases) {
    ph = get_le<double>(p);
    p += 8;
  }
  s.data.resize(values);
  for (auto& v : s.data) {
    v = get_le<float>(p);
    p += 4;
  }
  s.validate();
  return s;
}

void write_stack(const FrameStack& stack, const std::string& path) {
  const auto bytes = encode_stack(stack);
  const std::string tmp = path + ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

FrameStack read_stack(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open frame stack " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  FrameStack s = decode_stack(bytes);
  if (std::filesystem::exists(path + ".json")) read_sidecar(s, path + ".json");
  return s;
}

void write_sidecar(const FrameStack& stack, const std::string& path) {
  nlohmann::json j;
  j["seed"] = stack.seed;
  j["config_hash"] = stack.config_hash;
  j["filter"] = to_string(stack.filter());
  j["calibration"] = (stack.flags & frame_flags::kCalibration) != 0;
  j["n_frames"] = stack.n_frames;
  j["q_max_mrad"] = stack.q_max;
  std::ofstream os(path + ".partial");
  os << j.dump(2) << '\n';
  os.close();
  std::filesystem::rename(path + ".partial", path);
}

void read_sidecar(FrameStack& stack, const std::string& path) {
  std::ifstream is(path);
  try {
    const auto j = nlohmann::json::parse(is);
    stack.seed = j.value("seed", std::uint64_t{0});
    stack.config_hash = j.value("config_hash", std::string());
    stack.q_max = j.value("q_max_mrad", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("frame stack sidecar " + path + ": " + e.what());
  }
}

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t frame) {
  return splitmix64(splitmix64(seed) ^ (frame * 0xD1B54A32D192ED03ull + 1));
}

FieldSampler::FieldSampler(const MultimodeState& state, FilterTag filter) : grid_(state.grid()) {
  if (state.single_mode()) throw std::invalid_argument("FieldSampler: state has no spatial raster");
  max_oam_ = state.max_oam();
  for (int l = 0; l <= max_oam_; ++l) check_physical(state.sector(l));
  factors_.resize(static_cast<std::size_t>(max_oam_) + 1);
  std::vector<double> tops(factors_.size(), 0.0);
  parallel_for(factors_.size(), [&](std::size_t l) {
    auto mom = state.ring_moments(static_cast<int>(l));
    if (filter == FilterTag::kShifted) mom.anomalous.setZero();
    factors_[l] = classical_factor(mom.normal, mom.anomalous, &tops[l]);
  });
  dominant_ = *std::max_element(tops.begin(), tops.end());
  const int nc = 2 * max_oam_ + 1, nt = grid_.n_theta;
  cos_tab_.resize(static_cast<std::size_t>(nc) * nt);
  sin_tab_.resize(cos_tab_.size());
  for (int c = 0; c < nc; ++c) {
    const int l = c - max_oam_;
    for (int t = 0; t < nt; ++t) {
      // Exact for integer multiples of the raster step.
      const int m = ((l * t) % nt + nt) % nt;
      cos_tab_[c * nt + t] = std::cos(grid_.dtheta() * m);
      sin_tab_[c * nt + t] = std::sin(grid_.dtheta() * m);
    }
  }
}

void FieldSampler::sample(std::mt19937_64& rng, double* image) const {
  const int n = grid_.n_q, nt = grid_.n_theta, nc = 2 * max_oam_ + 1;
  // Ring amplitudes, rows = OAM coefficient index, columns = ring.
  Eigen::MatrixXd re = Eigen::MatrixXd::Zero(n, nc), im = Eigen::MatrixXd::Zero(n, nc);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l <= max_oam_; ++l) {
    const auto& f = factors_[l];
    Eigen::VectorXd xi(f.cols());
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = normal(rng);
    const Eigen::VectorXd v = f * xi;
    const Eigen::Index d = v.size() / 2;
    for (Eigen::Index i = 0; i < d; ++i) {
      const int ring = static_cast<int>(i % n);
      const int c = max_oam_ + (i < n ? l : -l);
      re(ring, c) = v[i];
      im(ring, c) = v[d + i];
    }
  }
  const auto kernel = kernels::synthesize_intensity();
  for (int iq = 0; iq < n; ++iq) {
    const Eigen::VectorXd r = re.row(iq).transpose(), i = im.row(iq).transpose();
    kernel(r.data(), i.data(), nc, cos_tab_.data(), sin_tab_.data(), nt, 1.0 / nt,
           image + static_cast<std::size_t>(iq) * nt);
  }
}

std::vector<double> FieldSampler::mean_image() const {
  const int n = grid_.n_q, nt = grid_.n_theta;
  std::vector<double> ring(n, 0.0);
  for (const auto& f : factors_) {
    const Eigen::Index d = f.rows() / 2;
    for (Eigen::Index i = 0; i < d; ++i) {
      ring[i % n] += f.row(i).squaredNorm() + f.row(d + i).squaredNorm();
    }
  }
  std::vector<double> image(grid_.pixel_count());
  for (int iq = 0; iq < n; ++iq) {
    for (int it = 0; it < nt; ++it) image[grid_.index(iq, it)] = ring[iq] / nt;
  }
  return image;
}

FrameStack sample_frames(const MultimodeState& state, int n_frames, std::uint64_t seed,
                         const DetectorModel& detector, FilterTag filter, double phase_tag,
                         std::vector<std::string>* warnings) {
  if (n_frames < 0) throw std::invalid_argument("sample_frames: n_frames must be >= 0");
  detector.validate();
  const FieldSampler sampler(state, filter);
  low_gain_warning(sampler.dominant_mode_photons(), warnings);
  const auto& g = sampler.grid();
  FrameStack stack = empty_like(static_cast<std::uint32_t>(n_frames), g.n_q, g.n_theta, seed,
                                filter, phase_tag);
  stack.q_max = g.q_max;
  parallel_for(static_cast<std::size_t>(n_frames), [&](std::size_t f) {
    std::mt19937_64 rng(frame_seed(seed, f));
    std::vector<double> image(g.pixel_count());
    sampler.sample(rng, image.data());
    apply_detector(detector, rng, image.data(), stack.frame(f), image.size());
  });
  return stack;
}

FrameStack sample_frames(const GaussianState& state, const ModeBasis& basis, int n_frames,
                         std::uint64_t seed, const DetectorModel& detector, FilterTag filter,
                         double phase_tag, std::vector<std::string>* warnings) {
  if (n_frames < 0) throw std::invalid_argument("sample_frames: n_frames must be >= 0");
  if (static_cast<std::size_t>(state.n_modes()) != basis.size()) {
    throw std::invalid_argument("sample_frames: state dimension differs from basis size");
  }
  detector.validate();
  check_physical(state);
  auto mom = complex_moments(state);
  const Eigen::VectorXcd alpha = mom.amplitude;
  mom.normal -= alpha.conjugate() * alpha.transpose();
  mom.anomalous -= alpha * alpha.transpose();
  if (filter == FilterTag::kShifted) mom.anomalous.setZero();
  double top = 0.0;
  const Eigen::MatrixXd factor = classical_factor(mom.normal, mom.anomalous, &top);
  low_gain_warning(std::max(top, alpha.cwiseAbs2().maxCoeff()), warnings);
  const Eigen::MatrixXcd u = basis.sampled_modes();
  const auto& g = basis.grid();
  FrameStack stack = empty_like(static_cast<std::uint32_t>(n_frames), g.n_q, g.n_theta, seed,
                                filter, phase_tag);
  const Eigen::Index k = alpha.size();
  parallel_for(static_cast<std::size_t>(n_frames), [&](std::size_t f) {
    std::mt19937_64 rng(frame_seed(seed, f));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd xi(factor.cols());
    for (Eigen::Index c = 0; c < xi.size(); ++c) xi[c] = normal(rng);
    const Eigen::VectorXd v = factor * xi;
    Eigen::VectorXcd z(k);
    for (Eigen::Index a = 0; a < k; ++a) z[a] = alpha[a] + std::complex<double>(v[a], v[k + a]);
    const Eigen::VectorXd image = (u * z).cwiseAbs2();
    apply_detector(detector, rng, image.data(), stack.frame(f), static_cast<std::size_t>(image.size()));
  });
  return stack;
}

FrameStack concatenate(const std::vector<FrameStack>& stacks) {
  if (stacks.empty()) return {};
  FrameStack out = stacks.front();
  for (std::size_t s = 1; s < stacks.size(); ++s) {
    const auto& b = stacks[s];
    if (b.height != out.height || b.width != out.width) {
      throw FormatError("concatenate: frame shapes differ");
    }
    out.n_frames += b.n_frames;
    out.phases.insert(out.phases.end(), b.phases.begin(), b.phases.end());
    out.data.insert(out.data.end(), b.data.begin(), b.data.end());
  }
  return out;
}

std::vector<double> frame_mean(const FrameStack& stack) {
  std::vector<double> mean(stack.frame_size(), 0.0);
  if (stack.n_frames == 0) return mean;
  for (std::size_t f = 0; f < stack.n_frames; ++f) {
    const float* fr = stack.frame(f);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += fr[i];
  }
  for (double& m : mean) m /= stack.n_frames;
  return mean;
}

}  // namespace su11
