#pragma once

#include <span>

namespace hidden_agg {

double mean(std::span<const double> values);

//! Bessel-corrected variance. Throws UndefinedAggregate for fewer than two values.
double sample_variance(std::span<const double> values);

//! Divides by n; the form under which MSE = bias^2 + variance holds exactly.
double population_variance(std::span<const double> values);

//! Mean squared deviation from `truth`.
double mean_squared_error(std::span<const double> values, double truth);

} // namespace hidden_agg
