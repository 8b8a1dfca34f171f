#include "hidden_agg/query_tree.hpp"

#include "hidden_agg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hidden_agg {

QueryTree::QueryTree(Schema schema, std::vector<Predicate> condition)
    : schema_(std::move(schema)), condition_(std::move(condition)) {
	validate_condition(schema_, condition_);
	std::sort(condition_.begin(), condition_.end(),
	          [](const Predicate &a, const Predicate &b) { return a.attribute < b.attribute; });
	for (auto attr : schema_.level_order()) {
		bool pinned = std::any_of(condition_.begin(), condition_.end(),
		                          [&](const Predicate &p) { return p.attribute == attr; });
		if (!pinned) {
			levels_.push_back(attr);
		}
	}
}

QueryTree subtree_for_condition(const Schema &schema, std::vector<Predicate> condition) {
	return QueryTree(schema, std::move(condition));
}

std::vector<std::size_t> QueryTree::attribute_order() const {
	std::vector<std::size_t> order;
	for (const auto &p : condition_) {
		order.push_back(p.attribute);
	}
	order.insert(order.end(), levels_.begin(), levels_.end());
	return order;
}

double QueryTree::leaf_count() const {
	return inverse_p(SearchQuery{levels_.size(), std::vector<Value>(levels_.size(), 0)});
}

double QueryTree::log_leaf_count() const {
	return log_inverse_p(SearchQuery{levels_.size(), std::vector<Value>(levels_.size(), 0)});
}

SearchQuery QueryTree::node_on_path(const Signature &signature, std::size_t depth) const {
	if (depth > levels_.size() || signature.assignment.size() != levels_.size()) {
		throw SchemaError("node depth or signature length does not match the tree");
	}
	return {depth, std::vector<Value>(signature.assignment.begin(), signature.assignment.begin() + depth)};
}

SearchQuery QueryTree::parent(const SearchQuery &q) const {
	if (q.depth == 0) {
		throw SchemaError("the root has no parent");
	}
	SearchQuery up = q;
	--up.depth;
	up.prefix.pop_back();
	return up;
}

SearchQuery QueryTree::child_on_path(const SearchQuery &q, const Signature &signature) const {
	if (q.depth >= levels_.size()) {
		throw SchemaError("a leaf has no children");
	}
	SearchQuery down = q;
	down.prefix.push_back(signature.assignment.at(q.depth));
	++down.depth;
	return down;
}

bool QueryTree::on_path(const SearchQuery &q, const Signature &signature) const {
	if (q.depth > signature.assignment.size() || q.prefix.size() != q.depth) {
		return false;
	}
	return std::equal(q.prefix.begin(), q.prefix.end(), signature.assignment.begin());
}

double QueryTree::inverse_p(const SearchQuery &q) const {
	double inv = 1.0;
	for (std::size_t i = 0; i < q.depth; ++i) {
		inv *= static_cast<double>(level_fanout(i));
		if (inv > 1e300) {
			// past this point only the log form stays meaningful
			return std::exp(log_inverse_p(q));
		}
	}
	return inv;
}

double QueryTree::log_inverse_p(const SearchQuery &q) const {
	double acc = 0.0;
	for (std::size_t i = 0; i < q.depth; ++i) {
		acc += std::log(static_cast<double>(level_fanout(i)));
	}
	return acc;
}

double QueryTree::p(const SearchQuery &q) const {
	return 1.0 / inverse_p(q);
}

std::vector<Predicate> QueryTree::predicates(const SearchQuery &q) const {
	std::vector<Predicate> out = condition_;
	for (std::size_t i = 0; i < q.depth; ++i) {
		out.push_back({levels_[i], q.prefix[i]});
	}
	return out;
}

Signature QueryTree::random_signature(Rng &rng) const {
	Signature sig;
	sig.assignment.reserve(levels_.size());
	for (std::size_t i = 0; i < levels_.size(); ++i) {
		sig.assignment.push_back(static_cast<Value>(uniform_index(rng, level_fanout(i))));
	}
	return sig;
}

Signature QueryTree::leaf(std::size_t index) const {
	Signature sig;
	sig.assignment.resize(levels_.size());
	for (std::size_t i = levels_.size(); i-- > 0;) {
		const auto fanout = level_fanout(i);
		sig.assignment[i] = static_cast<Value>(index % fanout);
		index /= fanout;
	}
	return sig;
}

namespace {

QueryOutcome issue(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &q, BudgetLedger &ledger,
                   std::size_t &cost) {
	auto preds = tree.predicates(q);
	++cost;
	return db.search(preds, ledger);
}

// Continues a drill-down below `q`, which is known to overflow.
DrillResult descend(HiddenDatabase &db, const QueryTree &tree, SearchQuery q, QueryOutcome outcome,
                    const Signature &signature, BudgetLedger &ledger, std::size_t cost) {
	while (outcome.status == QueryStatus::overflow) {
		if (tree.is_leaf(q)) {
			throw SchemaError("leaf query overflows: more than k tuples share one full assignment");
		}
		if (ledger.exhausted()) {
			return {false, q, std::move(outcome), cost};
		}
		q = tree.child_on_path(q, signature);
		outcome = issue(db, tree, q, ledger, cost);
	}
	return {true, std::move(q), std::move(outcome), cost};
}

// Climbs from `q` (non-overflowing) until the parent overflows, the root is reached,
// or, under trust_valid, a valid ancestor is found.
DrillResult ascend(HiddenDatabase &db, const QueryTree &tree, SearchQuery q, QueryOutcome outcome,
                   BudgetLedger &ledger, ReissuePolicy policy, std::size_t cost) {
	while (q.depth > 0) {
		if (policy == ReissuePolicy::trust_valid && outcome.status == QueryStatus::valid) {
			break;
		}
		if (ledger.exhausted()) {
			return {false, q, std::move(outcome), cost};
		}
		auto up = tree.parent(q);
		auto up_outcome = issue(db, tree, up, ledger, cost);
		if (up_outcome.status == QueryStatus::overflow) {
			break;
		}
		q = std::move(up);
		outcome = std::move(up_outcome);
	}
	return {true, std::move(q), std::move(outcome), cost};
}

} // namespace

DrillResult drill_down(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &start,
                       const Signature &signature, BudgetLedger &ledger) {
	if (!tree.on_path(start, signature)) {
		throw SchemaError("drill-down start is not on the signature's path");
	}
	if (ledger.exhausted()) {
		return {false, start, {}, 0};
	}
	std::size_t cost = 0;
	auto outcome = issue(db, tree, start, ledger, cost);
	return descend(db, tree, start, std::move(outcome), signature, ledger, cost);
}

DrillResult roll_up(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &q, QueryOutcome q_outcome,
                    BudgetLedger &ledger, ReissuePolicy policy) {
	return ascend(db, tree, q, std::move(q_outcome), ledger, policy, 0);
}

DrillResult reissue(HiddenDatabase &db, const QueryTree &tree, const SearchQuery &previous,
                    const Signature &signature, BudgetLedger &ledger, ReissuePolicy policy) {
	if (!tree.on_path(previous, signature)) {
		throw SchemaError("previous terminal is not on the signature's path");
	}
	if (ledger.exhausted()) {
		return {false, previous, {}, 0};
	}
	std::size_t cost = 0;
	auto outcome = issue(db, tree, previous, ledger, cost);
	if (outcome.status == QueryStatus::overflow) {
		return descend(db, tree, previous, std::move(outcome), signature, ledger, cost);
	}
	return ascend(db, tree, previous, std::move(outcome), ledger, policy, cost);
}

SearchQuery static_terminal(const HiddenDatabase &db, const QueryTree &tree, const Signature &signature) {
	for (std::size_t d = 0; d <= tree.levels(); ++d) {
		auto q = tree.node_on_path(signature, d);
		if (db.peek(tree.predicates(q)).status != QueryStatus::overflow) {
			return q;
		}
	}
	throw SchemaError("leaf query overflows: more than k tuples share one full assignment");
}

} // namespace hidden_agg
