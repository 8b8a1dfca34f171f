#pragma once

#include "hidden_agg/schema.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hidden_agg {

enum class AggFn { count, sum, avg };

enum class AggregateKind {
	single_round,
	//! Q(D_j) - Q(D_{j-1})
	size_delta,
	//! mean of Q over the last `window` rounds
	running_average,
};

//! f(t): constant 1, or the numeric reading of one attribute's value.
struct Measure {
	std::optional<std::size_t> attribute;

	static Measure one() {
		return {};
	}
	static Measure of(std::size_t attribute) {
		return {attribute};
	}

	double operator()(const Schema &schema, std::span<const Value> values) const;
};

//! SELECT AGG(f(t)) FROM D WHERE <conjunction of equalities>, plus how it spans rounds.
struct AggregateSpec {
	std::string id;
	AggFn agg = AggFn::count;
	Measure measure;
	std::vector<Predicate> selection;
	AggregateKind kind = AggregateKind::single_round;
	std::size_t window = 1;

	static AggregateSpec count(std::vector<Predicate> selection = {});
	static AggregateSpec sum(std::size_t attribute, std::vector<Predicate> selection = {});
	static AggregateSpec avg(std::size_t attribute, std::vector<Predicate> selection = {});
};

//! Throws SchemaError when the spec does not fit the schema (bad predicate,
//! duplicate selection attribute, non-numeric measure attribute, zero window).
void validate(const AggregateSpec &spec, const Schema &schema);

//! g(t). Throws SchemaError when a constraint is outside the schema.
bool eval_selection(const AggregateSpec &spec, const Schema &schema, const Tuple &t);

//! Exact single-round value of `spec` (ignoring `kind`) over one state.
//! AVG over an empty selection throws UndefinedAggregate.
double single_round_value(const AggregateSpec &spec, const Schema &schema, const DatabaseState &db);

//! Exact value of `spec` at the current state. `prior` lists earlier states oldest
//! first; size_delta needs at least one, running_average uses up to window-1.
double ground_truth(const AggregateSpec &spec, const Schema &schema, const DatabaseState &current,
                    std::span<const DatabaseState *const> prior = {});

//! Composes a kind-aware truth from per-round single-round values (oldest first,
//! last entry is the current round). Same rules as ground_truth.
double compose_truth(const AggregateSpec &spec, std::span<const double> single_round_history);

std::string to_string(AggFn fn);
std::string to_string(AggregateKind kind);

} // namespace hidden_agg
