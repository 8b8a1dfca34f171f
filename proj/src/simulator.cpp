#include "hidden_agg/simulator.hpp"

#include "hidden_agg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hidden_agg {

std::string to_string(QueryStatus status) {
	switch (status) {
	case QueryStatus::underflow:
		return "underflow";
	case QueryStatus::valid:
		return "valid";
	case QueryStatus::overflow:
		return "overflow";
	}
	return "?";
}

std::atomic<std::uint64_t> BudgetLedger::violations_{0};

BudgetLedger::BudgetLedger(std::int64_t budget) : budget_(budget) {
	if (budget < 0) {
		throw BudgetExceeded("negative query budget");
	}
}

void BudgetLedger::charge() {
	if (used_ >= budget_) {
		violations_.fetch_add(1, std::memory_order_relaxed);
		throw BudgetExceeded("query budget of " + std::to_string(budget_) + " exhausted for this round");
	}
	++used_;
}

std::uint64_t BudgetLedger::violations() {
	return violations_.load(std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------
// InsertSource
// ---------------------------------------------------------------------------

std::size_t InsertSource::VectorHash::operator()(const std::vector<Value> &v) const noexcept {
	std::size_t h = 1469598103934665603ULL;
	for (auto x : v) {
		h = (h ^ x) * 1099511628211ULL;
	}
	return h;
}

InsertSource InsertSource::pool(std::vector<std::vector<Value>> rows) {
	InsertSource src;
	src.rows_ = std::move(rows);
	return src;
}

InsertSource InsertSource::uniform(const Schema &schema, const std::vector<std::vector<Value>> &taken) {
	InsertSource src;
	src.generator_ = true;
	src.capacity_ = 1.0;
	for (std::size_t i = 0; i < schema.size(); ++i) {
		src.domain_sizes_.push_back(schema.domain_size(i));
		src.capacity_ *= static_cast<double>(schema.domain_size(i));
	}
	src.taken_.insert(taken.begin(), taken.end());
	return src;
}

std::vector<Value> InsertSource::next(Rng &rng) {
	if (!generator_) {
		if (cursor_ >= rows_.size()) {
			throw ScheduleError("insertion pool exhausted after " + std::to_string(rows_.size()) + " tuples");
		}
		return rows_[cursor_++];
	}
	if (static_cast<double>(taken_.size()) >= capacity_) {
		throw ScheduleError("every distinct assignment has already been generated");
	}
	std::vector<Value> values(domain_sizes_.size());
	do {
		for (std::size_t i = 0; i < values.size(); ++i) {
			values[i] = static_cast<Value>(uniform_index(rng, domain_sizes_[i]));
		}
	} while (!taken_.insert(values).second);
	return values;
}

std::size_t InsertSource::remaining() const {
	if (generator_) {
		return static_cast<std::size_t>(-1);
	}
	return rows_.size() - cursor_;
}

// ---------------------------------------------------------------------------
// scoring and updates
// ---------------------------------------------------------------------------

ScoreFunction random_scores(std::uint64_t seed) {
	return [seed](const Tuple &t) {
		return static_cast<double>(mix_seed(seed, t.id) >> 11) * 0x1.0p-53;
	};
}

ScoreFunction value_ordered_scores(const Schema &schema) {
	std::vector<double> sizes;
	for (std::size_t i = 0; i < schema.size(); ++i) {
		sizes.push_back(static_cast<double>(schema.domain_size(i)));
	}
	return [sizes](const Tuple &t) {
		double s = 0;
		for (std::size_t i = 0; i < t.values.size(); ++i) {
			s = s * sizes[i] + t.values[i];
		}
		return s;
	};
}

UpdatePlan plan_update(std::span<const TupleId> live, const UpdateSchedule &schedule, InsertSource &source,
                       Rng &rng) {
	if (schedule.delete_fraction < 0.0 || schedule.delete_fraction > 1.0) {
		throw ScheduleError("delete fraction must lie in [0, 1]");
	}
	UpdatePlan plan;
	// the epsilon keeps 0.005 * 5000 at 25 despite binary rounding
	const auto deletions =
	    static_cast<std::size_t>(std::floor(schedule.delete_fraction * static_cast<double>(live.size()) + 1e-9));
	for (auto pos : sample_without_replacement(rng, live.size(), std::min(deletions, live.size()))) {
		plan.deletions.push_back(live[pos]);
	}
	for (std::size_t i = 0; i < schedule.inserts_per_round; ++i) {
		plan.insertions.push_back(source.next(rng));
	}
	return plan;
}

DatabaseState apply_update(const DatabaseState &db, const UpdateSchedule &schedule, InsertSource &source,
                           Rng &rng, TupleId &next_id) {
	std::vector<TupleId> live;
	live.reserve(db.tuples.size());
	for (const auto &t : db.tuples) {
		live.push_back(t.id);
	}
	auto plan = plan_update(live, schedule, source, rng);
	std::unordered_set<TupleId> doomed(plan.deletions.begin(), plan.deletions.end());
	DatabaseState next;
	next.round_index = db.round_index + 1;
	for (const auto &t : db.tuples) {
		if (!doomed.count(t.id)) {
			next.tuples.push_back(t);
		}
	}
	for (auto &values : plan.insertions) {
		next.tuples.push_back({next_id++, std::move(values)});
	}
	return next;
}

// ---------------------------------------------------------------------------
// HiddenDatabase
// ---------------------------------------------------------------------------

HiddenDatabase::HiddenDatabase(Schema schema, const std::vector<std::vector<Value>> &initial, std::size_t k,
                               UpdateSchedule schedule, InsertSource inserts, ScoreFunction score)
    : schema_(std::move(schema)), k_(k), schedule_(schedule), inserts_(std::move(inserts)),
      score_(score ? std::move(score) : random_scores(mix_seed(schedule.seed, 0x5c03e))),
      schedule_rng_(mix_seed(schedule.seed, 0x5ced)) {
	if (k_ == 0) {
		throw SchemaError("k must be at least 1");
	}
	apply_changes({}, initial);
}

const DatabaseState &HiddenDatabase::state() const {
	if (state_dirty_) {
		state_cache_.tuples.clear();
		state_cache_.tuples.reserve(by_score_.size());
		for (const auto &slot : slots_) {
			if (slot.alive) {
				state_cache_.tuples.push_back(slot.tuple);
			}
		}
		state_dirty_ = false;
	}
	state_cache_.round_index = round_;
	return state_cache_;
}

bool HiddenDatabase::score_before(std::uint32_t a, std::uint32_t b) const {
	const auto &sa = slots_[a];
	const auto &sb = slots_[b];
	if (sa.score != sb.score) {
		return sa.score > sb.score;
	}
	return sa.tuple.id < sb.tuple.id;
}

bool HiddenDatabase::key_before(const Index &index, std::uint32_t a, std::uint32_t b) const {
	const auto &va = slots_[a].tuple.values;
	const auto &vb = slots_[b].tuple.values;
	for (auto attr : index.order) {
		if (va[attr] != vb[attr]) {
			return va[attr] < vb[attr];
		}
	}
	return slots_[a].tuple.id < slots_[b].tuple.id;
}

void HiddenDatabase::add_index(std::span<const std::size_t> attribute_order) {
	std::vector<std::size_t> order(attribute_order.begin(), attribute_order.end());
	for (const auto &idx : indexes_) {
		if (idx.order == order) {
			return;
		}
	}
	Index index;
	index.order = std::move(order);
	index.rows = by_score_;
	std::sort(index.rows.begin(), index.rows.end(),
	          [&](std::uint32_t a, std::uint32_t b) { return key_before(index, a, b); });
	indexes_.push_back(std::move(index));
}

const HiddenDatabase::Index *HiddenDatabase::find_index(std::span<const Predicate> query) const {
	for (const auto &idx : indexes_) {
		if (query.size() > idx.order.size()) {
			continue;
		}
		bool ok = true;
		for (std::size_t i = 0; i < query.size() && ok; ++i) {
			ok = std::any_of(query.begin(), query.end(),
			                 [&](const Predicate &p) { return p.attribute == idx.order[i]; });
		}
		if (ok) {
			return &idx;
		}
	}
	return nullptr;
}

std::vector<std::uint32_t> HiddenDatabase::top_matches(std::span<const Predicate> query, std::size_t limit,
                                                       std::size_t &count) const {
	std::vector<std::uint32_t> out;
	auto by_score = [this](std::uint32_t a, std::uint32_t b) { return score_before(a, b); };
	auto scan = [&](bool count_all) {
		for (auto row : by_score_) {
			if (!matches(slots_[row].tuple, query)) {
				continue;
			}
			if (out.size() < limit) {
				out.push_back(row);
			} else if (!count_all) {
				break;
			}
			++count;
		}
	};

	count = 0;
	const Index *idx = find_index(query);
	if (idx == nullptr) {
		scan(true);
		return out;
	}

	const std::size_t depth = query.size();
	std::vector<Value> key(depth);
	for (std::size_t i = 0; i < depth; ++i) {
		for (const auto &p : query) {
			if (p.attribute == idx->order[i]) {
				key[i] = p.value;
			}
		}
	}
	auto row_less_key = [&](std::uint32_t row, const std::vector<Value> &k) {
		const auto &v = slots_[row].tuple.values;
		for (std::size_t i = 0; i < depth; ++i) {
			if (v[idx->order[i]] != k[i]) {
				return v[idx->order[i]] < k[i];
			}
		}
		return false;
	};
	auto key_less_row = [&](const std::vector<Value> &k, std::uint32_t row) {
		const auto &v = slots_[row].tuple.values;
		for (std::size_t i = 0; i < depth; ++i) {
			if (v[idx->order[i]] != k[i]) {
				return k[i] < v[idx->order[i]];
			}
		}
		return false;
	};
	auto lo = std::lower_bound(idx->rows.begin(), idx->rows.end(), key, row_less_key);
	auto hi = std::upper_bound(lo, idx->rows.end(), key, key_less_row);
	count = static_cast<std::size_t>(hi - lo);

	if (count <= limit) {
		out.assign(lo, hi);
		std::sort(out.begin(), out.end(), by_score);
		return out;
	}
	// Either rank the range directly or walk the global score order until `limit`
	// matches turn up; the walk expects about limit * n / count steps.
	const double walk = static_cast<double>(limit) * static_cast<double>(by_score_.size()) / static_cast<double>(count);
	if (static_cast<double>(count) <= walk) {
		out.assign(lo, hi);
		std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(limit), out.end(), by_score);
		out.resize(limit);
		return out;
	}
	const std::size_t total = count;
	count = 0;
	scan(false);
	count = total;
	return out;
}

QueryOutcome HiddenDatabase::peek(std::span<const Predicate> query) const {
	validate_condition(schema_, query);
	std::size_t count = 0;
	auto rows = top_matches(query, k_, count);
	QueryOutcome outcome;
	if (count == 0) {
		outcome.status = QueryStatus::underflow;
	} else if (count <= k_) {
		outcome.status = QueryStatus::valid;
	} else {
		outcome.status = QueryStatus::overflow;
	}
	outcome.returned.reserve(rows.size());
	for (auto row : rows) {
		outcome.returned.push_back(slots_[row].tuple);
	}
	return outcome;
}

std::size_t HiddenDatabase::count_matches(std::span<const Predicate> query) const {
	std::size_t count = 0;
	top_matches(query, 0, count);
	return count;
}

QueryOutcome HiddenDatabase::search(std::span<const Predicate> query, BudgetLedger &ledger) {
	ledger.charge();
	apply_due_events();
	++calls_this_round_;
	return peek(query);
}

std::vector<TupleId> HiddenDatabase::live_ids() const {
	std::vector<TupleId> ids;
	ids.reserve(by_score_.size());
	for (const auto &slot : slots_) {
		if (slot.alive) {
			ids.push_back(slot.tuple.id);
		}
	}
	return ids;
}

void HiddenDatabase::advance_round() {
	flush_pending();
	++round_;
	calls_this_round_ = 0;
	const auto live = live_ids();
	auto plan = plan_update(live, schedule_, inserts_, schedule_rng_);
	if (schedule_.mode == UpdateMode::round) {
		apply_changes(plan.deletions, plan.insertions);
		return;
	}
	// one event every ceil(G / count) calls, the first one step into the round
	pending_.clear();
	next_event_ = 0;
	const std::size_t timeline = std::max<std::size_t>(schedule_.queries_per_round, 1);
	auto step_for = [&](std::size_t events) { return (timeline + events - 1) / events; };
	if (!plan.deletions.empty()) {
		const auto step = step_for(plan.deletions.size());
		for (std::size_t i = 0; i < plan.deletions.size(); ++i) {
			pending_.push_back({(i + 1) * step, false, plan.deletions[i], {}});
		}
	}
	if (!plan.insertions.empty()) {
		const auto step = step_for(plan.insertions.size());
		for (std::size_t i = 0; i < plan.insertions.size(); ++i) {
			pending_.push_back({(i + 1) * step, true, 0, std::move(plan.insertions[i])});
		}
	}
	std::stable_sort(pending_.begin(), pending_.end(),
	                 [](const Event &a, const Event &b) { return a.at_call < b.at_call; });
}

void HiddenDatabase::apply_due_events() {
	while (next_event_ < pending_.size() && pending_[next_event_].at_call <= calls_this_round_) {
		auto &ev = pending_[next_event_++];
		if (ev.is_insert) {
			apply_changes({}, {std::move(ev.values)});
		} else {
			const TupleId victim = ev.victim;
			apply_changes(std::span<const TupleId>(&victim, 1), {});
		}
	}
}

void HiddenDatabase::flush_pending() {
	std::vector<TupleId> deletions;
	std::vector<std::vector<Value>> insertions;
	for (; next_event_ < pending_.size(); ++next_event_) {
		auto &ev = pending_[next_event_];
		if (ev.is_insert) {
			insertions.push_back(std::move(ev.values));
		} else {
			deletions.push_back(ev.victim);
		}
	}
	pending_.clear();
	next_event_ = 0;
	if (!deletions.empty() || !insertions.empty()) {
		apply_changes(deletions, insertions);
	}
}

TupleId HiddenDatabase::insert(std::vector<Value> values) {
	const auto id = static_cast<TupleId>(slots_.size());
	apply_changes({}, {std::move(values)});
	return id;
}

void HiddenDatabase::erase(TupleId id) {
	apply_changes(std::span<const TupleId>(&id, 1), {});
}

void HiddenDatabase::apply(const UpdatePlan &plan) {
	apply_changes(plan.deletions, plan.insertions);
}

bool HiddenDatabase::contains(TupleId id) const {
	return id < slots_.size() && slots_[id].alive;
}

void HiddenDatabase::apply_changes(std::span<const TupleId> deletions,
                                   const std::vector<std::vector<Value>> &insertions) {
	for (const auto &values : insertions) {
		if (!schema_.conforms(values)) {
			throw SchemaError("inserted tuple does not conform to the schema");
		}
	}
	bool removed = false;
	for (auto id : deletions) {
		if (!contains(id)) {
			throw ScheduleError("cannot delete tuple " + std::to_string(id) + ": not in the database");
		}
		slots_[id].alive = false;
		removed = true;
	}
	if (removed) {
		auto dead = [this](std::uint32_t row) { return !slots_[row].alive; };
		std::erase_if(by_score_, dead);
		for (auto &idx : indexes_) {
			std::erase_if(idx.rows, dead);
		}
	}
	if (!insertions.empty()) {
		std::vector<std::uint32_t> fresh;
		fresh.reserve(insertions.size());
		for (const auto &values : insertions) {
			Slot slot;
			slot.tuple.id = static_cast<TupleId>(slots_.size());
			slot.tuple.values = values;
			slot.score = score_(slot.tuple);
			slot.alive = true;
			fresh.push_back(static_cast<std::uint32_t>(slots_.size()));
			slots_.push_back(std::move(slot));
		}
		auto merge_into = [&](std::vector<std::uint32_t> &rows, auto less) {
			std::vector<std::uint32_t> added = fresh;
			std::sort(added.begin(), added.end(), less);
			std::vector<std::uint32_t> merged;
			merged.reserve(rows.size() + added.size());
			std::merge(rows.begin(), rows.end(), added.begin(), added.end(), std::back_inserter(merged), less);
			rows.swap(merged);
		};
		merge_into(by_score_, [this](std::uint32_t a, std::uint32_t b) { return score_before(a, b); });
		for (auto &idx : indexes_) {
			merge_into(idx.rows, [this, &idx](std::uint32_t a, std::uint32_t b) { return key_before(idx, a, b); });
		}
	}
	state_dirty_ = true;
}

} // namespace hidden_agg
