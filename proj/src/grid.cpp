#include "su11/grid.hpp"

#include <stdexcept>
#include <string>

namespace su11 {

void TransverseGrid::validate() const {
  if (n_theta < 4 || n_theta % 2 != 0) {
    throw std::invalid_argument("grid.n_theta must be even and >= 4, got " +
                                std::to_string(n_theta));
  }
  if (n_q < 1) {
    throw std::invalid_argument("grid.n_q must be >= 1");
  }
  if (!(q_max > 0.0)) {
    throw std::invalid_argument("grid.q_max must be positive");
  }
}

}  // namespace su11
