#pragma once

namespace hicov {

/// Inverse standard normal CDF (Wichura's AS241 PPND16).
/// Throws std::domain_error unless 0 < p < 1.
double normal_quantile(double p);

/// Upper tail 1 - Phi(x), accurate for large x.
double normal_upper_tail(double x);

}  // namespace hicov
