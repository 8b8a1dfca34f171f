#include "hidden_agg/aggregate.hpp"

#include "hidden_agg/errors.hpp"

#include <algorithm>

namespace hidden_agg {

double Measure::operator()(const Schema &schema, std::span<const Value> values) const {
	if (!attribute) {
		return 1.0;
	}
	auto v = schema.numeric_value(*attribute, values[*attribute]);
	if (!v) {
		throw SchemaError("measure attribute '" + schema.attribute(*attribute).name + "' value '" +
		                  schema.value_name(*attribute, values[*attribute]) + "' is not numeric");
	}
	return *v;
}

AggregateSpec AggregateSpec::count(std::vector<Predicate> selection) {
	AggregateSpec spec;
	spec.id = "count";
	spec.agg = AggFn::count;
	spec.selection = std::move(selection);
	return spec;
}

AggregateSpec AggregateSpec::sum(std::size_t attribute, std::vector<Predicate> selection) {
	AggregateSpec spec;
	spec.id = "sum";
	spec.agg = AggFn::sum;
	spec.measure = Measure::of(attribute);
	spec.selection = std::move(selection);
	return spec;
}

AggregateSpec AggregateSpec::avg(std::size_t attribute, std::vector<Predicate> selection) {
	AggregateSpec spec = sum(attribute, std::move(selection));
	spec.id = "avg";
	spec.agg = AggFn::avg;
	return spec;
}

void validate(const AggregateSpec &spec, const Schema &schema) {
	validate_condition(schema, spec.selection);
	if (spec.agg == AggFn::count && spec.measure.attribute) {
		throw SchemaError("COUNT takes no measure attribute");
	}
	if (spec.agg != AggFn::count) {
		if (!spec.measure.attribute) {
			throw SchemaError("SUM/AVG need a measure attribute");
		}
		const auto a = *spec.measure.attribute;
		if (a >= schema.size()) {
			throw SchemaError("measure attribute outside the schema");
		}
		for (Value v = 0; v < schema.domain_size(a); ++v) {
			if (!schema.numeric_value(a, v)) {
				throw SchemaError("measure attribute '" + schema.attribute(a).name + "' has non-numeric value '" +
				                  schema.value_name(a, v) + "'");
			}
		}
	}
	if (spec.kind == AggregateKind::running_average && spec.window == 0) {
		throw SchemaError("running average window must be at least 1");
	}
}

bool eval_selection(const AggregateSpec &spec, const Schema &schema, const Tuple &t) {
	validate_condition(schema, spec.selection);
	return matches(t, spec.selection);
}

double single_round_value(const AggregateSpec &spec, const Schema &schema, const DatabaseState &db) {
	validate_condition(schema, spec.selection);
	double count = 0;
	double sum = 0;
	for (const auto &t : db.tuples) {
		if (!matches(t, spec.selection)) {
			continue;
		}
		count += 1;
		if (spec.agg != AggFn::count) {
			sum += spec.measure(schema, t.values);
		}
	}
	switch (spec.agg) {
	case AggFn::count:
		return count;
	case AggFn::sum:
		return sum;
	case AggFn::avg:
		if (count == 0) {
			throw UndefinedAggregate("AVG over an empty selection");
		}
		return sum / count;
	}
	return 0;
}

double compose_truth(const AggregateSpec &spec, std::span<const double> history) {
	if (history.empty()) {
		throw StateError("no rounds to evaluate");
	}
	switch (spec.kind) {
	case AggregateKind::single_round:
		return history.back();
	case AggregateKind::size_delta:
		if (history.size() < 2) {
			throw StateError("size delta needs the previous round");
		}
		return history[history.size() - 1] - history[history.size() - 2];
	case AggregateKind::running_average: {
		const std::size_t w = std::min(spec.window, history.size());
		double total = 0;
		for (std::size_t i = history.size() - w; i < history.size(); ++i) {
			total += history[i];
		}
		return total / static_cast<double>(w);
	}
	}
	return 0;
}

double ground_truth(const AggregateSpec &spec, const Schema &schema, const DatabaseState &current,
                    std::span<const DatabaseState *const> prior) {
	std::vector<double> history;
	std::size_t needed = 0;
	if (spec.kind == AggregateKind::size_delta) {
		if (prior.empty()) {
			throw StateError("size delta needs the previous database state");
		}
		needed = 1;
	} else if (spec.kind == AggregateKind::running_average) {
		needed = std::min(spec.window - 1, prior.size());
	}
	for (std::size_t i = prior.size() - needed; i < prior.size(); ++i) {
		history.push_back(single_round_value(spec, schema, *prior[i]));
	}
	history.push_back(single_round_value(spec, schema, current));
	return compose_truth(spec, history);
}

std::string to_string(AggFn fn) {
	switch (fn) {
	case AggFn::count:
		return "COUNT";
	case AggFn::sum:
		return "SUM";
	case AggFn::avg:
		return "AVG";
	}
	return "?";
}

std::string to_string(AggregateKind kind) {
	switch (kind) {
	case AggregateKind::single_round:
		return "single_round";
	case AggregateKind::size_delta:
		return "size_delta";
	case AggregateKind::running_average:
		return "running_average";
	}
	return "?";
}

} // namespace hidden_agg
