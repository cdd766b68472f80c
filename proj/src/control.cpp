#include "jsqd/control.hpp"

#include <algorithm>
#include <stdexcept>

namespace jsqd {

MasterControl MasterControl::constant(double alpha, double theta, double horizon) {
  MasterControl c{{0.0, horizon}, {alpha}, {theta}};
  c.validate();
  return c;
}

std::size_t MasterControl::piece(double s) const {
  const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), s);
  const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - breakpoints.begin() - 1, 0));
  return std::min(k, pieces() - 1);
}

double MasterControl::theta_max() const { return *std::max_element(theta.begin(), theta.end()); }
double MasterControl::alpha_max() const { return *std::max_element(alpha.begin(), alpha.end()); }

void MasterControl::validate() const {
  if (breakpoints.size() < 2 || alpha.size() + 1 != breakpoints.size() || theta.size() != alpha.size())
    throw std::invalid_argument("control: need K+1 breakpoints and K values per control");
  if (breakpoints.front() != 0.0) throw std::invalid_argument("control: breakpoints must start at 0");
  for (std::size_t k = 1; k < breakpoints.size(); ++k)
    if (!(breakpoints[k] > breakpoints[k - 1]))
      throw std::invalid_argument("control: breakpoints must be strictly increasing");
  for (std::size_t k = 0; k < alpha.size(); ++k)
    if (alpha[k] < 0.0 || theta[k] < 0.0) throw std::invalid_argument("control: negative control value");
}

}  // namespace jsqd
