#include "chatd/netmed/hypergeometric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chatd/error.hpp"

namespace chatd::netmed {

namespace {

double log_choose(std::int64_t n, std::int64_t r) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(r) + 1.0) -
         std::lgamma(static_cast<double>(n - r) + 1.0);
}

}  // namespace

double hypergeometric_tail(std::int64_t k, std::int64_t successes, std::int64_t draws,
                           std::int64_t population) {
  if (k < 0 || successes < 0 || draws < 0 || population < 0 || k > std::min(successes, draws) ||
      successes > population || draws > population) {
    throw Error(ErrorCode::kDomainError,
                "hypergeometric_tail(k=" + std::to_string(k) + ", s=" + std::to_string(successes) +
                    ", d=" + std::to_string(draws) + ", N=" + std::to_string(population) + ")");
  }
  const std::int64_t lo = std::max<std::int64_t>(0, draws + successes - population);
  const std::int64_t hi = std::min(successes, draws);
  if (k <= lo) return 1.0;

  const double log_total = log_choose(population, draws);
  const auto term_at = [&](std::int64_t i) {
    return std::exp(log_choose(successes, i) + log_choose(population - successes, draws - i) -
                    log_total);
  };
  const double fail_pool = static_cast<double>(population - successes - draws);
  // t(i+1)/t(i) = (s-i)(d-i) / ((i+1)(N-s-d+i+1))
  const auto ratio_up = [&](std::int64_t i) {
    return static_cast<double>(successes - i) * static_cast<double>(draws - i) /
           (static_cast<double>(i + 1) * (fail_pool + static_cast<double>(i + 1)));
  };

  // Sum away from the mode so the first term dominates and nothing underflows
  // before it matters. Below the mode the complement is accumulated instead.
  const auto mode = static_cast<std::int64_t>(
      std::floor(static_cast<double>(draws + 1) * static_cast<double>(successes + 1) /
                 static_cast<double>(population + 2)));
  if (k > mode) {
    double term = term_at(k);
    double sum = term;
    for (std::int64_t i = k; i < hi; ++i) {
      term *= ratio_up(i);
      sum += term;
      if (term < sum * 1e-18) break;
    }
    return std::clamp(sum, 0.0, 1.0);
  }
  double term = term_at(k - 1);
  double lower = term;
  for (std::int64_t i = k - 1; i > lo; --i) {
    term /= ratio_up(i - 1);
    lower += term;
    if (term < lower * 1e-18) break;
  }
  const double sum = 1.0 - lower;
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace chatd::netmed
