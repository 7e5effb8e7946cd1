#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "su11/gaussian.hpp"
#include "su11/interferometer.hpp"
#include "su11/modes.hpp"

namespace su11 {

/// degenerate: signal and idler both detected, anomalous correlations kept.
/// shifted: slightly non-degenerate band only, anomalous correlations removed.
enum class FilterTag { kDegenerate, kShifted };

std::string to_string(FilterTag tag);
FilterTag filter_from_string(const std::string& name);

struct DetectorModel {
  double efficiency = 1.0;
  double read_noise = 0.0;  // photons RMS
  std::optional<double> saturation;

  void validate() const;
};

namespace frame_flags {
constexpr std::uint32_t kShifted = 1u << 0;
constexpr std::uint32_t kCalibration = 1u << 1;
/// Derived rasters (e.g. dB maps) that may hold negative values.
constexpr std::uint32_t kSignedRaster = 1u << 2;
}  // namespace frame_flags

/// Ensemble of single-shot images, height = n_q rows, width = n_theta columns.
struct FrameStack {
  std::uint32_t n_frames = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t flags = 0;
  std::vector<double> phases;  // one per frame
  std::vector<float> data;     // frame-major, row-major

  // Sidecar metadata, not part of the binary layout.
  std::uint64_t seed = 0;
  std::string config_hash;
  double q_max = 0.0;  // mrad, 0 if unknown

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  const float* frame(std::size_t f) const { return data.data() + f * frame_size(); }
  float* frame(std::size_t f) { return data.data() + f * frame_size(); }
  FilterTag filter() const {
    return (flags & frame_flags::kShifted) ? FilterTag::kShifted : FilterTag::kDegenerate;
  }
  void validate() const;
  bool operator==(const FrameStack&) const = default;
};

/// Binary layout (little-endian): "SU11FRM1", u32 n_frames, u32 height,
/// u32 width, u32 flags, f64 phases[n_frames], f32 data[n_frames*height*width].
void write_stack(const FrameStack& stack, const std::string& path);
FrameStack read_stack(const std::string& path);
std::vector<unsigned char> encode_stack(const FrameStack& stack);
FrameStack decode_stack(const std::vector<unsigned char>& bytes);
/// JSON sidecar next to a stack: seed, config hash, filter tag.
void write_sidecar(const FrameStack& stack, const std::string& path);
void read_sidecar(FrameStack& stack, const std::string& path);

/// Counter-based per-frame seed, so frame f is identical however frames are
/// split across threads.
std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t frame);

/// Semiclassical field sampler. Draws the ring amplitudes of every OAM
/// sector from the zero-mean complex Gaussian with the state's normal (and,
/// for the degenerate filter, anomalous) moments, then synthesises |field|^2
/// per pixel. Anomalous moments beyond the classical bound are shrunk to it;
/// the normal moments are kept, so mean images are exact.
class FieldSampler {
 public:
  FieldSampler(const MultimodeState& state, FilterTag filter);

  const TransverseGrid& grid() const { return grid_; }
  /// Photons per pixel for one shot, row-major.
  void sample(std::mt19937_64& rng, double* image) const;
  /// Largest photon number of a single sector eigenmode.
  double dominant_mode_photons() const { return dominant_; }
  /// Mean image of the classical field.
  std::vector<double> mean_image() const;

 private:
  TransverseGrid grid_;
  int max_oam_ = 0;
  std::vector<Eigen::MatrixXd> factors_;  // (2 d x rank) per sector
  std::vector<double> cos_tab_, sin_tab_;
  double dominant_ = 0.0;
};

/// n_frames shots from `state`, deterministic given seed. Warnings (low
/// gain regime) are appended to `warnings` when given.
FrameStack sample_frames(const MultimodeState& state, int n_frames, std::uint64_t seed,
                         const DetectorModel& detector, FilterTag filter, double phase_tag,
                         std::vector<std::string>* warnings = nullptr);

/// Same sampler over an arbitrary mode basis (pixel synthesis by dense
/// mode functions).
FrameStack sample_frames(const GaussianState& state, const ModeBasis& basis, int n_frames,
                         std::uint64_t seed, const DetectorModel& detector, FilterTag filter,
                         double phase_tag, std::vector<std::string>* warnings = nullptr);

/// Concatenate stacks of equal frame shape.
FrameStack concatenate(const std::vector<FrameStack>& stacks);

/// Per-pixel mean over frames.
std::vector<double> frame_mean(const FrameStack& stack);

}  // namespace su11
