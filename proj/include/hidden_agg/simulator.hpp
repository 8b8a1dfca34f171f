#pragma once

#include "hidden_agg/rng.hpp"
#include "hidden_agg/schema.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace hidden_agg {

enum class QueryStatus { underflow, valid, overflow };

std::string to_string(QueryStatus status);

//! What the top-k interface reveals for one search.
struct QueryOutcome {
	QueryStatus status = QueryStatus::underflow;
	//! Highest-scored matches first. Empty on underflow, all of Sel(q) when valid,
	//! exactly k tuples on overflow.
	std::vector<Tuple> returned;
};

//! Per-round query allowance G.
class BudgetLedger {
public:
	explicit BudgetLedger(std::int64_t budget);

	std::int64_t budget() const {
		return budget_;
	}
	std::int64_t used() const {
		return used_;
	}
	std::int64_t remaining() const {
		return budget_ - used_;
	}
	bool exhausted() const {
		return used_ >= budget_;
	}

	//! Accounts for one search. Throws BudgetExceeded when none remain, and counts the
	//! refusal in violations().
	void charge();
	//! Round boundary.
	void reset() {
		used_ = 0;
	}

	//! Process-wide number of refused charges.
	static std::uint64_t violations();

private:
	std::int64_t budget_;
	std::int64_t used_ = 0;
	static std::atomic<std::uint64_t> violations_;
};

enum class UpdateMode { round, constant };

struct UpdateSchedule {
	std::size_t inserts_per_round = 0;
	double delete_fraction = 0.0;
	UpdateMode mode = UpdateMode::round;
	std::uint64_t seed = 0;
	//! Length of a round's query timeline; constant mode spreads events over it.
	std::size_t queries_per_round = 100;
};

//! Where inserted tuples come from: a finite reserve pool (consumed in order) or
//! a generator of uniformly random assignments never seen before.
class InsertSource {
public:
	InsertSource() = default;

	static InsertSource pool(std::vector<std::vector<Value>> rows);
	//! `taken` lists assignments already in use (the initial database).
	static InsertSource uniform(const Schema &schema, const std::vector<std::vector<Value>> &taken);

	//! Throws ScheduleError once exhausted.
	std::vector<Value> next(Rng &rng);
	//! Rows left in a pool; generators report SIZE_MAX.
	std::size_t remaining() const;

private:
	struct VectorHash {
		std::size_t operator()(const std::vector<Value> &v) const noexcept;
	};

	bool generator_ = false;
	std::vector<std::vector<Value>> rows_;
	std::size_t cursor_ = 0;
	std::vector<std::size_t> domain_sizes_;
	std::unordered_set<std::vector<Value>, VectorHash> taken_;
	double capacity_ = 0;
};

//! Static score per tuple; larger scores rank first.
using ScoreFunction = std::function<double(const Tuple &)>;

//! Seeded pseudo-random score derived from the tuple id only.
ScoreFunction random_scores(std::uint64_t seed);
//! Ranks by attribute values, first attribute most significant.
ScoreFunction value_ordered_scores(const Schema &schema);

//! Deletions and insertions applied at one round boundary.
struct UpdatePlan {
	std::vector<TupleId> deletions;
	std::vector<std::vector<Value>> insertions;
};

//! Chooses floor(delete_fraction * n) victims uniformly without replacement from
//! `live` and draws `inserts_per_round` rows from `source`.
UpdatePlan plan_update(std::span<const TupleId> live, const UpdateSchedule &schedule, InsertSource &source,
                       Rng &rng);

//! Round-mode update of a bare state: the next round's tuple set. New tuples get
//! ids from `next_id` onwards.
DatabaseState apply_update(const DatabaseState &db, const UpdateSchedule &schedule, InsertSource &source,
                           Rng &rng, TupleId &next_id);

//! A dynamic hidden database behind a top-k conjunctive search interface.
//!
//! Searches go through ordered indexes registered with add_index(); a query whose
//! predicates are a prefix of a registered attribute order is answered by binary
//! search, anything else by a full scan. The object is a value type: copies replay
//! the same update trajectory, which is how each estimator gets its own timeline in
//! constant mode.
class HiddenDatabase {
public:
	HiddenDatabase(Schema schema, const std::vector<std::vector<Value>> &initial, std::size_t k,
	               UpdateSchedule schedule = {}, InsertSource inserts = {}, ScoreFunction score = {});

	const Schema &schema() const {
		return schema_;
	}
	std::size_t k() const {
		return k_;
	}
	int round() const {
		return round_;
	}
	std::size_t size() const {
		return by_score_.size();
	}
	const UpdateSchedule &schedule() const {
		return schedule_;
	}

	//! Live tuples ordered by id.
	const DatabaseState &state() const;

	void add_index(std::span<const std::size_t> attribute_order);

	//! Charges one query to `ledger`, applies any constant-mode events that are due,
	//! then answers. Throws BudgetExceeded when the ledger is spent.
	QueryOutcome search(std::span<const Predicate> query, BudgetLedger &ledger);

	//! Answers without charging or advancing the event clock.
	QueryOutcome peek(std::span<const Predicate> query) const;

	//! |Sel(q)|; invisible to estimators, used by tests and oracles.
	std::size_t count_matches(std::span<const Predicate> query) const;

	//! Moves to the next round. Round mode applies the whole update now; constant mode
	//! flushes leftovers of the previous round and schedules this round's events.
	void advance_round();
	//! Applies every pending constant-mode event.
	void flush_pending();
	std::size_t pending_events() const {
		return pending_.size() - next_event_;
	}

	//! Direct mutation for fixtures and replays; bypasses the schedule.
	TupleId insert(std::vector<Value> values);
	void erase(TupleId id);
	void apply(const UpdatePlan &plan);
	bool contains(TupleId id) const;

private:
	struct Slot {
		Tuple tuple;
		double score = 0;
		bool alive = false;
	};
	struct Index {
		std::vector<std::size_t> order;
		std::vector<std::uint32_t> rows;
	};
	struct Event {
		std::size_t at_call = 0;
		bool is_insert = false;
		TupleId victim = 0;
		std::vector<Value> values;
	};

	bool score_before(std::uint32_t a, std::uint32_t b) const;
	bool key_before(const Index &index, std::uint32_t a, std::uint32_t b) const;
	const Index *find_index(std::span<const Predicate> query) const;
	std::vector<std::uint32_t> top_matches(std::span<const Predicate> query, std::size_t limit,
	                                       std::size_t &count) const;
	void apply_changes(std::span<const TupleId> deletions, const std::vector<std::vector<Value>> &insertions);
	void apply_due_events();
	std::vector<TupleId> live_ids() const;

	Schema schema_;
	std::size_t k_;
	UpdateSchedule schedule_;
	InsertSource inserts_;
	ScoreFunction score_;
	Rng schedule_rng_;

	std::vector<Slot> slots_;
	std::vector<std::uint32_t> by_score_;
	std::vector<Index> indexes_;

	int round_ = 1;
	std::size_t calls_this_round_ = 0;
	std::vector<Event> pending_;
	std::size_t next_event_ = 0;

	mutable DatabaseState state_cache_;
	mutable bool state_dirty_ = true;
};

} // namespace hidden_agg
