#include "jsi/numeric.hpp"

#include <algorithm>

namespace jsi {

double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

void log_softmax_inplace(std::span<double> xs) {
  const double z = log_sum_exp(xs);
  if (z == kNegInf) return;
  for (double& x : xs) {
    if (x != kNegInf) x -= z;
  }
}

}  // namespace jsi
