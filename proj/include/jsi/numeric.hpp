#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace jsi {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

// log(1 - exp(a)) for a <= 0. Returns -inf at a == 0 and NaN-free for a > 0
// (clamped to -inf, the caller treats that as an exhausted mass).
inline double log1m_exp(double a) {
  if (a >= 0.0) return kNegInf;
  if (a > -0.6931471805599453) return std::log(-std::expm1(a));
  return std::log1p(-std::exp(a));
}

// log(exp(a) - exp(b)); -inf whenever b >= a.
inline double log_diff_exp(double a, double b) {
  if (b == kNegInf) return a;
  if (b >= a) return kNegInf;
  return a + log1m_exp(b - a);
}

double log_sum_exp(std::span<const double> xs);

// In-place log-softmax. Entries at -inf stay at -inf. A row that is entirely
// -inf is left unchanged.
void log_softmax_inplace(std::span<double> xs);

}  // namespace jsi
