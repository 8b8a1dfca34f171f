#pragma once

#include "hidden_agg/rng.hpp"
#include "hidden_agg/schema.hpp"
#include "hidden_agg/simulator.hpp"

#include <cstddef>
#include <vector>

namespace hidden_agg {

//! A random leaf: one domain value per free level, drawn independently and uniformly.
struct Signature {
	std::vector<Value> assignment;

	friend bool operator==(const Signature &, const Signature &) = default;
};

//! A node of the query tree: the tree's pinned condition plus `depth` level predicates.
struct SearchQuery {
	std::size_t depth = 0;
	//! one value per level above the node; prefix.size() == depth
	std::vector<Value> prefix;

	friend bool operator==(const SearchQuery &, const SearchQuery &) = default;
};

//! The query tree over a schema, or the subtree pinned by a conjunctive condition.
//!
//! Level i constrains attribute level_attribute(i); the order follows the schema's
//! level order with pinned attributes removed.
class QueryTree {
public:
	//! Throws SchemaError on a condition outside the schema or pinning an attribute twice.
	explicit QueryTree(Schema schema, std::vector<Predicate> condition = {});

	const Schema &schema() const {
		return schema_;
	}
	const std::vector<Predicate> &condition() const {
		return condition_;
	}
	std::size_t levels() const {
		return levels_.size();
	}
	std::size_t level_attribute(std::size_t level) const {
		return levels_.at(level);
	}
	std::size_t level_fanout(std::size_t level) const {
		return schema_.domain_size(levels_.at(level));
	}
	//! Pinned attributes, then the free levels; register it with HiddenDatabase::add_index.
	std::vector<std::size_t> attribute_order() const;

	double leaf_count() const;
	double log_leaf_count() const;

	SearchQuery root() const {
		return {};
	}
	//! The depth-`depth` node on the signature's root-to-leaf path.
	SearchQuery node_on_path(const Signature &signature, std::size_t depth) const;
	SearchQuery parent(const SearchQuery &q) const;
	SearchQuery child_on_path(const SearchQuery &q, const Signature &signature) const;
	bool on_path(const SearchQuery &q, const Signature &signature) const;
	bool is_leaf(const SearchQuery &q) const {
		return q.depth == levels_.size();
	}

	//! Fraction of leaves whose path passes through q.
	double p(const SearchQuery &q) const;
	//! 1/p(q), as a running product of level fanouts.
	double inverse_p(const SearchQuery &q) const;
	double log_inverse_p(const SearchQuery &q) const;

	//! The conjunctive search: pinned predicates followed by the prefix.
	std::vector<Predicate> predicates(const SearchQuery &q) const;

	Signature random_signature(Rng &rng) const;

	//! Leaf number `index` in [0, leaf_count()) in mixed radix, first level most significant.
	Signature leaf(std::size_t index) const;

private:
	Schema schema_;
	std::vector<Predicate> condition_;
	std::vector<std::size_t> levels_;
};

//! The subtree whose root pins `condition`.
QueryTree subtree_for_condition(const Schema &schema, std::vector<Predicate> condition);

//! Algorithm used when an updated terminal turns out valid or underflowing.
enum class ReissuePolicy {
	//! Accept a still-valid terminal after one query; roll up from an underflow to the
	//! first non-underflowing ancestor. Unbiased only while no tuple is deleted.
	trust_valid,
	//! Confirm that the terminal's parent still overflows, and roll up past valid
	//! ancestors, so the terminal is always the top non-overflowing query on the path.
	verify_parent,
};

struct DrillResult {
	//! false when the budget ran out before a terminal was confirmed
	bool complete = false;
	SearchQuery terminal;
	QueryOutcome outcome;
	//! queries issued by this call
	std::size_t cost = 0;
};

//! Issues `start`, then one-level extensions along the signature, stopping at the
//! first non-overflowing query. A partial result is returned when the ledger runs out.
//! Throws SchemaError if a leaf overflows (duplicate assignments beyond k).
DrillResult drill_down(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &start,
                       const Signature &signature, BudgetLedger &ledger);

//! Climbs from `q`, which just underflowed, toward the root. Under trust_valid the
//! climb stops at the first valid ancestor (the terminal) or at an overflowing one
//! (terminal stays at its underflowing child, contributing 0). verify_parent keeps
//! climbing past valid ancestors until the next one overflows. `q_outcome` is the
//! outcome already observed for q; its cost is not counted again.
DrillResult roll_up(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &q, QueryOutcome q_outcome,
                    BudgetLedger &ledger, ReissuePolicy policy);

//! Re-finds the terminal of a drill-down whose previous terminal was `previous`.
DrillResult reissue(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &previous,
                    const Signature &signature, BudgetLedger &ledger, ReissuePolicy policy);

//! Top non-overflowing query on the path, computed by issuing every node (peek, no budget).
SearchQuery static_terminal(const HiddenDatabase &db, const QueryTree &tree, const Signature &signature);

} // namespace hidden_agg
