#include "hidden_agg/schema.hpp"

#include "hidden_agg/errors.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <unordered_set>

namespace hidden_agg {

namespace {

std::optional<double> parse_number(const std::string &text) {
	if (text.empty()) {
		return std::nullopt;
	}
	double out = 0;
	auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
	if (ec != std::errc() || ptr != text.data() + text.size()) {
		return std::nullopt;
	}
	return out;
}

} // namespace

Schema::Schema(std::vector<Attribute> attributes, std::vector<std::size_t> level_order)
    : attributes_(std::move(attributes)), level_order_(std::move(level_order)) {
	if (attributes_.empty()) {
		throw SchemaError("schema needs at least one attribute");
	}
	std::unordered_set<std::string> names;
	for (const auto &attr : attributes_) {
		if (!names.insert(attr.name).second) {
			throw SchemaError("duplicate attribute name '" + attr.name + "'");
		}
		if (attr.domain.size() < 2) {
			throw SchemaError("attribute '" + attr.name + "' has fewer than two domain values");
		}
		if (attr.domain.size() > std::numeric_limits<Value>::max()) {
			throw SchemaError("attribute '" + attr.name + "' has too many domain values");
		}
		std::unordered_set<std::string> seen;
		for (const auto &v : attr.domain) {
			if (!seen.insert(v).second) {
				throw SchemaError("attribute '" + attr.name + "' repeats domain value '" + v + "'");
			}
		}
	}
	if (level_order_.empty()) {
		level_order_.resize(attributes_.size());
		for (std::size_t i = 0; i < level_order_.size(); ++i) {
			level_order_[i] = i;
		}
	}
	if (level_order_.size() != attributes_.size()) {
		throw SchemaError("level order must list every attribute exactly once");
	}
	std::vector<bool> used(attributes_.size(), false);
	for (auto a : level_order_) {
		if (a >= attributes_.size() || used[a]) {
			throw SchemaError("level order is not a permutation of the attributes");
		}
		used[a] = true;
	}
	numeric_.resize(attributes_.size());
	for (std::size_t i = 0; i < attributes_.size(); ++i) {
		for (const auto &v : attributes_[i].domain) {
			numeric_[i].push_back(parse_number(v));
		}
	}
}

Schema Schema::boolean(std::size_t m) {
	std::vector<Attribute> attrs;
	attrs.reserve(m);
	for (std::size_t i = 0; i < m; ++i) {
		attrs.push_back({"A" + std::to_string(i + 1), {"0", "1"}});
	}
	return Schema(std::move(attrs));
}

std::size_t Schema::attribute_index(std::string_view name) const {
	for (std::size_t i = 0; i < attributes_.size(); ++i) {
		if (attributes_[i].name == name) {
			return i;
		}
	}
	throw SchemaError("unknown attribute '" + std::string(name) + "'");
}

Value Schema::value_code(std::size_t attribute, std::string_view value) const {
	const auto &domain = this->attribute(attribute).domain;
	auto it = std::find(domain.begin(), domain.end(), value);
	if (it == domain.end()) {
		throw SchemaError("value '" + std::string(value) + "' is not in the domain of '" +
		                  attributes_[attribute].name + "'");
	}
	return static_cast<Value>(it - domain.begin());
}

const std::string &Schema::value_name(std::size_t attribute, Value code) const {
	return this->attribute(attribute).domain.at(code);
}

std::optional<double> Schema::numeric_value(std::size_t attribute, Value code) const {
	return numeric_.at(attribute).at(code);
}

bool Schema::conforms(std::span<const Value> values) const {
	if (values.size() != attributes_.size()) {
		return false;
	}
	for (std::size_t i = 0; i < values.size(); ++i) {
		if (values[i] >= attributes_[i].domain.size()) {
			return false;
		}
	}
	return true;
}

Schema Schema::with_level_order(std::vector<std::size_t> level_order) const {
	return Schema(attributes_, std::move(level_order));
}

bool matches(std::span<const Value> values, std::span<const Predicate> predicates) {
	for (const auto &p : predicates) {
		if (values[p.attribute] != p.value) {
			return false;
		}
	}
	return true;
}

void validate_condition(const Schema &schema, std::span<const Predicate> predicates) {
	for (std::size_t i = 0; i < predicates.size(); ++i) {
		const auto &p = predicates[i];
		if (p.attribute >= schema.size()) {
			throw SchemaError("predicate references attribute #" + std::to_string(p.attribute) +
			                  " outside the schema");
		}
		if (p.value >= schema.domain_size(p.attribute)) {
			throw SchemaError("predicate value #" + std::to_string(p.value) + " outside the domain of '" +
			                  schema.attribute(p.attribute).name + "'");
		}
		for (std::size_t j = 0; j < i; ++j) {
			if (predicates[j].attribute == p.attribute) {
				const auto &name = schema.attribute(p.attribute).name;
				throw SchemaError("condition pins '" + name + "' twice ('" +
				                  schema.value_name(p.attribute, predicates[j].value) + "' and '" +
				                  schema.value_name(p.attribute, p.value) + "')");
			}
		}
	}
}

} // namespace hidden_agg
