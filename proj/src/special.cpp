#include "jsqd/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace jsqd {

double log_binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  const auto dn = static_cast<double>(n), dk = static_cast<double>(k);
  return std::lgamma(dn + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dn - dk + 1.0);
}

namespace {

constexpr int kMaxIter = 100000;
constexpr double kEps = 1e-16;

// log of sum_{k>=0} x^k / (a (a+1) ... (a+k)), times the prefactor.
double log_p_series(double a, double x) {
  double term = 1.0 / a, sum = term, ap = a;
  for (int it = 0; it < kMaxIter; ++it) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return -x + a * std::log(x) - std::lgamma(a) + std::log(sum);
}

double log_q_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return -x + a * std::log(x) - std::lgamma(a) + std::log(h);
}

}  // namespace

double log_gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("log_gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x < a + 1.0) return log_p_series(a, x);
  return std::log1p(-std::exp(log_q_continued_fraction(a, x)));
}

}  // namespace jsqd
