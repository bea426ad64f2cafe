#pragma once

#include <cstdint>

namespace chatd::netmed {

/// Upper tail P(X >= k) of a hypergeometric variable counting successes among
/// `draws` items drawn without replacement from a population of `population`
/// items, `successes` of which are marked.
///
/// Terms are accumulated from the log-gamma value of the first term, so the
/// function stays finite for populations well beyond the factorial range.
/// Throws DomainError unless 0 <= k <= min(successes, draws) and both
/// successes and draws are <= population.
double hypergeometric_tail(std::int64_t k, std::int64_t successes, std::int64_t draws,
                           std::int64_t population);

}  // namespace chatd::netmed
