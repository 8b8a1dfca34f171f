#include "hidden_agg/stats.hpp"

#include "hidden_agg/errors.hpp"

namespace hidden_agg {

double mean(std::span<const double> values) {
	if (values.empty()) {
		throw UndefinedAggregate("mean of an empty sample");
	}
	// compensated sum; long runs of near-equal estimates otherwise drift
	double sum = 0.0;
	double carry = 0.0;
	for (double v : values) {
		double y = v - carry;
		double t = sum + y;
		carry = (t - sum) - y;
		sum = t;
	}
	return sum / static_cast<double>(values.size());
}

namespace {

double squared_deviation(std::span<const double> values, double center) {
	double acc = 0.0;
	for (double v : values) {
		acc += (v - center) * (v - center);
	}
	return acc;
}

} // namespace

double sample_variance(std::span<const double> values) {
	if (values.size() < 2) {
		throw UndefinedAggregate("sample variance needs at least two values");
	}
	return squared_deviation(values, mean(values)) / static_cast<double>(values.size() - 1);
}

double population_variance(std::span<const double> values) {
	return squared_deviation(values, mean(values)) / static_cast<double>(values.size());
}

double mean_squared_error(std::span<const double> values, double truth) {
	if (values.empty()) {
		throw UndefinedAggregate("MSE of an empty sample");
	}
	return squared_deviation(values, truth) / static_cast<double>(values.size());
}

} // namespace hidden_agg
