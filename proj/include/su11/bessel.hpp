#pragma once

#include <vector>

namespace su11 {

/// Exponentially scaled modified Bessel functions I_l(z) e^{-z}, l = 0..lmax,
/// by Miller backward recurrence normalised with e^{-z}(I_0 + 2 sum I_l) = 1.
/// Stays finite for arguments where I_l itself overflows. Requires z >= 0.
std::vector<double> scaled_bessel_i(double z, int lmax);

}  // namespace su11
