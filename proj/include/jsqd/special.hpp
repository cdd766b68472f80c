#pragma once

#include <cstdint>

namespace jsqd {

/// log C(n, k) via lgamma.
double log_binomial(std::int64_t n, std::int64_t k);

/// log P(a, x), the regularized lower incomplete gamma function, for a > 0,
/// x >= 0. Series for x < a + 1, Lentz continued fraction for the upper tail
/// otherwise (log1p(−Q) keeps precision when P is close to 1).
double log_gamma_p(double a, double x);

}  // namespace jsqd
