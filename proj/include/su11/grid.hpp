#pragma once

#include <cstddef>
#include <numbers>

namespace su11 {

/// Far-field polar raster. Radial bins are cell-centred on [0, q_max],
/// azimuthal bins start at theta = 0 and cover one full turn.
///
/// Rasters are stored row-major with one row per radial bin, so an image
/// has height n_q and width n_theta.
struct TransverseGrid {
  int n_theta = 128;
  int n_q = 64;
  double q_max = 20.0;  // mrad

  void validate() const;

  double dq() const { return q_max / n_q; }
  double dtheta() const { return 2.0 * std::numbers::pi / n_theta; }
  double q(int iq) const { return (iq + 0.5) * dq(); }
  double theta(int it) const { return it * dtheta(); }
  double pixel_area(int iq) const { return q(iq) * dq() * dtheta(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(n_q) * static_cast<std::size_t>(n_theta);
  }
  std::size_t index(int iq, int it) const {
    return static_cast<std::size_t>(iq) * n_theta + it;
  }
  /// Largest |l| representable on the azimuthal raster.
  int max_oam() const { return n_theta / 2 - 1; }

  bool operator==(const TransverseGrid&) const = default;
};

}  // namespace su11
