#pragma once

#include "hidden_agg/aggregate.hpp"
#include "hidden_agg/allocation.hpp"
#include "hidden_agg/query_tree.hpp"
#include "hidden_agg/simulator.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hidden_agg {

//! Horvitz-Thompson pair for one terminal: sum of f(t) and count over returned
//! tuples passing the selection, each scaled by 1/p(q).
struct Contribution {
	double num = 0;
	double den = 0;
};

//! Q(q)/p(q) for both halves of the aggregate. Throws std::logic_error on an
//! overflowing terminal.
Contribution drill_contribution(const AggregateSpec &spec, const QueryTree &tree, const SearchQuery &terminal,
                                const QueryOutcome &outcome);

//! Q(q)/p(q) for COUNT or SUM; zero on underflow. AVG has no single-drill-down
//! estimate and throws std::invalid_argument.
double single_estimate(const AggregateSpec &spec, const QueryTree &tree, const SearchQuery &terminal,
                       const QueryOutcome &outcome);

//! Inputs to one drill-down's contribution in round j when it was last updated in round x.
struct UpdateInputs {
	int x = 0;
	int j = 0;
	//! this round's Q(q)/p(q)
	double y_j = 0;
	//! round x's Q(q)/p(q); absent for a new drill-down
	std::optional<double> y_x;
	//! combined estimate of the single-round aggregate at round x
	std::optional<double> estimate_x;
	//! combined estimate of the single-round aggregate at round j-1
	std::optional<double> estimate_prev;
};

//! f_Q(x, q_j(r)).
//! single_round and running_average: estimate_x + y_j - y_x, or y_j when new.
//! size_delta: y_j - y_x when x = j-1, otherwise y_j - estimate_prev.
//! Throws StateError when a needed input is missing.
double f_q_update(AggregateKind kind, const UpdateInputs &in);

struct HistoryEntry {
	int round = 0;
	SearchQuery terminal;
	QueryOutcome outcome;
	double inverse_p = 1;
	Contribution estimate;
	//! value entered into the round's estimate, f_Q for the single-round aggregate
	Contribution contribution;
	std::size_t cost = 0;
};

struct DrillDownRecord {
	Signature signature;
	std::vector<HistoryEntry> history;

	int last_updated_round() const {
		return history.empty() ? 0 : history.back().round;
	}
	std::size_t cost_last_update() const {
		return history.empty() ? 0 : history.back().cost;
	}
};

//! Per-class detail of an RS round.
struct ClassReport {
	//! round the class's drill-downs were last updated in; this round for new ones
	int round = 0;
	std::size_t available = 0;
	std::size_t bootstrap = 0;
	std::size_t planned = 0;
	std::size_t updates = 0;
	double mean = 0;
	double variance = 0;
	double weight = 0;
	double alpha = 0;
	double beta = 0;
	double cost = 0;
	bool pooled = false;
};

struct RoundEstimate {
	int round = 0;
	//! kind-aware estimate; empty when undefined this round
	std::optional<double> value;
	//! single-round estimate (SUM/COUNT, or their ratio for AVG)
	std::optional<double> base;
	//! estimated variance of the single-round numerator estimate
	double variance = 0;
	std::vector<ClassReport> classes;
	std::size_t completed = 0;
	std::size_t queries = 0;
	std::vector<std::string> flags;
};

enum class EstimatorKind { restart, reissue, rs };

std::string to_string(EstimatorKind kind);
//! Throws ParseError on an unknown name.
EstimatorKind parse_estimator_kind(const std::string &name);

struct EstimatorOptions {
	std::uint64_t seed = 0;
	ReissuePolicy policy = ReissuePolicy::verify_parent;
	//! bootstrap drill-downs per class
	std::size_t varpi = 10;
};

//! State shared by the three algorithms: the tree, the aggregate, the records, and
//! per-round combined estimates. One instance tracks one aggregate and is driven
//! once per round.
class Estimator {
public:
	Estimator(QueryTree tree, AggregateSpec spec, EstimatorOptions options);
	virtual ~Estimator() = default;

	virtual EstimatorKind kind() const = 0;

	//! Spends at most ledger.remaining() queries on `db`. Throws NoEstimateError when
	//! no drill-down completed; the round is still recorded.
	RoundEstimate run_round(HiddenDatabase &db, BudgetLedger &ledger);

	const QueryTree &tree() const {
		return tree_;
	}
	const AggregateSpec &spec() const {
		return spec_;
	}
	const std::vector<DrillDownRecord> &records() const {
		return records_;
	}
	const std::vector<RoundEstimate> &rounds() const {
		return rounds_;
	}

protected:
	//! Combined single-round estimate of a past round.
	struct BaseState {
		Contribution value;
		double variance = 0;
	};

	//! Fills `out.base`-level state for round `j`: returns the combined pair or nothing
	//! when no drill-down completed. May also set `out.value` for size_delta.
	virtual std::optional<BaseState> estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
	                                                RoundEstimate &out) = 0;

	//! A new drill-down; appended to records_ when complete. When `carry_partial_` is
	//! set, a drill-down cut off by the budget keeps its signature and is finished
	//! first thing next round, so completion never depends on a drill-down's cost.
	std::optional<std::size_t> start_new(HiddenDatabase &db, BudgetLedger &ledger, int j);
	//! Mean cost of completed new drill-downs so far; 1 before any.
	double new_drill_cost() const;
	//! Reissues record `index`; appends a history entry when complete.
	bool update_record(HiddenDatabase &db, BudgetLedger &ledger, std::size_t index, int j);
	//! Mean and s^2/n over the latest entries of the given records.
	BaseState mean_of_latest(const std::vector<std::size_t> &indices, RoundEstimate &out) const;

	const BaseState *base_at(int round) const;
	double ratio(const Contribution &c) const;

	QueryTree tree_;
	AggregateSpec spec_;
	EstimatorOptions options_;
	Rng rng_;
	std::vector<DrillDownRecord> records_;
	std::vector<RoundEstimate> rounds_;
	std::map<int, BaseState> bases_;
	bool carry_partial_ = true;
	//! cut-off drill-downs: signature and the deepest node issued
	std::vector<std::pair<Signature, SearchQuery>> carried_;
	double new_cost_sum_ = 0;
	std::size_t new_cost_count_ = 0;
};

//! Fresh root drill-downs every round; one cut off by the budget is discarded.
class RestartEstimator : public Estimator {
public:
	RestartEstimator(QueryTree tree, AggregateSpec spec, EstimatorOptions options);
	EstimatorKind kind() const override {
		return EstimatorKind::restart;
	}

protected:
	std::optional<BaseState> estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
	                                        RoundEstimate &out) override;
};

//! Updates every retained drill-down in order, then spends what is left on new ones.
class ReissueEstimator : public Estimator {
public:
	using Estimator::Estimator;
	EstimatorKind kind() const override {
		return EstimatorKind::reissue;
	}

protected:
	std::optional<BaseState> estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
	                                        RoundEstimate &out) override;
};

//! Bootstraps every history class, allocates the budget across classes by
//! estimated variance and cost, and combines class means by inverse variance.
//!
//! Combination weights use variances pooled over earlier rounds rather than the
//! current samples, whose spread is correlated with their mean. Historic classes are
//! pooled first, their reference values treated as fully correlated, and the pool is
//! weighed against the new drill-downs.
class RsEstimator : public Estimator {
public:
	using Estimator::Estimator;
	EstimatorKind kind() const override {
		return EstimatorKind::rs;
	}

protected:
	std::optional<BaseState> estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
	                                        RoundEstimate &out) override;

private:
	//! within-round sum of squares and degrees of freedom of single estimates
	double y_ss_ = 0;
	double y_dof_ = 0;
	//! the same for update deltas, divided by the rounds elapsed since the last update
	double d_ss_ = 0;
	double d_dof_ = 0;
};

std::unique_ptr<Estimator> make_estimator(EstimatorKind kind, QueryTree tree, AggregateSpec spec,
                                          EstimatorOptions options);

//! Estimate of `spec` for `round` from the drill-downs recorded in that round alone,
//! as if the query had been posed before they ran. The selection is evaluated on the
//! stored answers, so `records` must come from a tree whose condition the selection
//! implies. Throws NoEstimateError when the round has no entries.
double replay_estimate(const QueryTree &tree, const std::vector<DrillDownRecord> &records,
                       const AggregateSpec &spec, int round);

} // namespace hidden_agg
