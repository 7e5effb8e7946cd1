#include "su11/bessel.hpp"

#include <cmath>
#include <stdexcept>

namespace su11 {

std::vector<double> scaled_bessel_i(double z, int lmax) {
  if (lmax < 0) throw std::invalid_argument("scaled_bessel_i: lmax < 0");
  if (!(z >= 0.0)) throw std::invalid_argument("scaled_bessel_i: z must be >= 0");
  std::vector<double> out(lmax + 1, 0.0);
  if (z == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const int start = 2 * (lmax + 20 + static_cast<int>(std::sqrt(60.0 * z)));
  double next = 0.0;  // f_{l+1}
  double cur = 1e-300;  // f_l
  double sum = 0.0;
  for (int l = start; l >= 1; --l) {
    const double prev = next + (2.0 * l / z) * cur;  // f_{l-1}
    if (l <= lmax) out[l] = cur;
    sum += 2.0 * cur;
    next = cur;
    cur = prev;
    if (std::abs(cur) > 1e200) {
      constexpr double kScale = 1e-200;
      cur *= kScale;
      next *= kScale;
      sum *= kScale;
      for (int k = l; k <= lmax; ++k) out[k] *= kScale;
    }
  }
  out[0] = cur;
  sum += cur;
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace su11
