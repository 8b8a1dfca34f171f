#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hidden_agg {

//! Categorical value, stored as its position in the attribute's domain.
using Value = std::uint16_t;
using TupleId = std::uint64_t;

struct Attribute {
	std::string name;
	std::vector<std::string> domain;
};

//! Attribute domains plus the attribute-to-tree-level mapping.
class Schema {
public:
	Schema() = default;
	//! Throws SchemaError unless m >= 1, every domain has >= 2 distinct values, and
	//! `level_order` (empty means identity) is a permutation of [0, m).
	explicit Schema(std::vector<Attribute> attributes, std::vector<std::size_t> level_order = {});

	//! m attributes named A1..Am with domain {"0", "1"}.
	static Schema boolean(std::size_t m);

	std::size_t size() const {
		return attributes_.size();
	}
	const Attribute &attribute(std::size_t i) const {
		return attributes_.at(i);
	}
	const std::vector<Attribute> &attributes() const {
		return attributes_;
	}
	std::size_t domain_size(std::size_t i) const {
		return attributes_.at(i).domain.size();
	}
	//! level i of the query tree is attribute level_order()[i]
	const std::vector<std::size_t> &level_order() const {
		return level_order_;
	}

	std::size_t attribute_index(std::string_view name) const;
	Value value_code(std::size_t attribute, std::string_view value) const;
	const std::string &value_name(std::size_t attribute, Value code) const;

	//! Numeric reading of a domain value, when the value parses as a number.
	std::optional<double> numeric_value(std::size_t attribute, Value code) const;

	//! True when `values` has one in-domain code per attribute.
	bool conforms(std::span<const Value> values) const;

	Schema with_level_order(std::vector<std::size_t> level_order) const;

private:
	std::vector<Attribute> attributes_;
	std::vector<std::size_t> level_order_;
	std::vector<std::vector<std::optional<double>>> numeric_;
};

struct Tuple {
	TupleId id = 0;
	std::vector<Value> values;
};

//! Equality constraint `attribute = value`.
struct Predicate {
	std::size_t attribute = 0;
	Value value = 0;

	friend bool operator==(const Predicate &, const Predicate &) = default;
};

bool matches(std::span<const Value> values, std::span<const Predicate> predicates);

inline bool matches(const Tuple &t, std::span<const Predicate> predicates) {
	return matches(t.values, predicates);
}

//! Checks attribute/value ranges and rejects two predicates on one attribute.
//! The contradiction message names both values.
void validate_condition(const Schema &schema, std::span<const Predicate> predicates);

//! The tuple set of one round, D_i.
struct DatabaseState {
	std::vector<Tuple> tuples;
	int round_index = 1;

	std::size_t size() const {
		return tuples.size();
	}
};

} // namespace hidden_agg
