#include "hidden_agg/dataset.hpp"
#include "hidden_agg/errors.hpp"
#include "hidden_agg/rng.hpp"
#include "hidden_agg/simulator.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

using namespace hidden_agg;

namespace {

std::vector<std::vector<Value>> random_rows(std::size_t n, std::size_t m, std::uint64_t seed) {
	return generate_boolean_db(n, m, seed).initial;
}

// Every match sorted by score, highest first, then cut at k.
QueryOutcome scan_oracle(const DatabaseState &state, const ScoreFunction &score, std::span<const Predicate> q,
                         std::size_t k) {
	std::vector<Tuple> hits;
	for (auto &t : state.tuples) {
		if (matches(t, q)) {
			hits.push_back(t);
		}
	}
	std::stable_sort(hits.begin(), hits.end(), [&](const Tuple &a, const Tuple &b) {
		const double sa = score(a);
		const double sb = score(b);
		return sa != sb ? sa > sb : a.id < b.id;
	});
	QueryOutcome out;
	out.status = hits.empty() ? QueryStatus::underflow : hits.size() > k ? QueryStatus::overflow : QueryStatus::valid;
	if (hits.size() > k) {
		hits.resize(k);
	}
	out.returned = hits;
	return out;
}

std::vector<TupleId> ids(const std::vector<Tuple> &tuples) {
	std::vector<TupleId> out;
	for (auto &t : tuples) {
		out.push_back(t.id);
	}
	return out;
}

} // namespace

TEST_CASE("top-k outcomes") {
	auto schema = Schema::boolean(2);
	std::vector<std::vector<Value>> rows;
	for (int i = 0; i < 3; ++i) {
		rows.push_back({0, 1});
	}
	for (int i = 0; i < 15; ++i) {
		rows.push_back({1, static_cast<Value>(i % 2)});
	}
	auto score = random_scores(4);
	HiddenDatabase db(schema, rows, 10, {}, {}, score);
	BudgetLedger ledger(100);

	const std::vector<Predicate> three{{0, 0}};
	auto r = db.search(three, ledger);
	CHECK(r.status == QueryStatus::valid);
	CHECK(r.returned.size() == 3);

	const std::vector<Predicate> none{{0, 0}, {1, 0}};
	r = db.search(none, ledger);
	CHECK(r.status == QueryStatus::underflow);
	CHECK(r.returned.empty());

	const std::vector<Predicate> fifteen{{0, 1}};
	r = db.search(fifteen, ledger);
	CHECK(r.status == QueryStatus::overflow);
	auto expected = scan_oracle(db.state(), score, fifteen, 10);
	CHECK(ids(r.returned) == ids(expected.returned));
	CHECK(ledger.used() == 3);
}

TEST_CASE("search agrees with a full-scan oracle") {
	auto schema = Schema::boolean(8);
	auto rows = random_rows(200, 8, 5);
	for (bool ordered : {false, true}) {
		auto score = ordered ? value_ordered_scores(schema) : random_scores(9);
		HiddenDatabase db(schema, rows, 7, {}, {}, score);
		std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6, 7};
		db.add_index(order);
		Rng rng(1);
		BudgetLedger ledger(100000);
		for (int trial = 0; trial < 400; ++trial) {
			std::vector<Predicate> q;
			const std::size_t depth = uniform_index(rng, 9);
			const bool prefix = trial % 2 == 0;
			auto attrs = sample_without_replacement(rng, 8, depth);
			for (std::size_t i = 0; i < depth; ++i) {
				q.push_back({prefix ? i : attrs[i], static_cast<Value>(uniform_index(rng, 2))});
			}
			auto got = db.search(q, ledger);
			auto want = scan_oracle(db.state(), score, q, 7);
			CHECK(got.status == want.status);
			CHECK((got.status == QueryStatus::overflow) == (db.count_matches(q) > 7));
			CHECK(ids(got.returned) == ids(want.returned));
			// repeating a query within a round gives the same answer
			CHECK(ids(db.search(q, ledger).returned) == ids(got.returned));
		}
	}
}

TEST_CASE("budget ledger") {
	auto before = BudgetLedger::violations();
	BudgetLedger ledger(2);
	ledger.charge();
	ledger.charge();
	CHECK(ledger.exhausted());
	CHECK_THROWS_AS(ledger.charge(), BudgetExceeded);
	CHECK(BudgetLedger::violations() == before + 1);
	ledger.reset();
	CHECK(ledger.remaining() == 2);
}

TEST_CASE("round updates") {
	auto data = generate_boolean_db(5000, 30, 3);
	UpdateSchedule sched;
	sched.inserts_per_round = 50;
	sched.delete_fraction = 0.005;
	sched.seed = 4;
	auto source = InsertSource::uniform(data.schema, data.initial);
	HiddenDatabase db(data.schema, data.initial, 10, sched, source);
	auto before = db.state();
	db.advance_round();
	CHECK(db.size() == 5025);
	CHECK(db.round() == 2);
	std::set<TupleId> old_ids;
	for (auto &t : before.tuples) {
		old_ids.insert(t.id);
	}
	std::size_t kept = 0;
	std::set<std::vector<Value>> values;
	for (auto &t : db.state().tuples) {
		kept += old_ids.count(t.id);
		values.insert(t.values);
	}
	CHECK(kept == 4975);
	CHECK(values.size() == 5025);
}

TEST_CASE("no-change and full-deletion updates") {
	auto data = generate_boolean_db(100, 10, 3);
	HiddenDatabase still(data.schema, data.initial, 10);
	auto before = still.state().tuples;
	still.advance_round();
	CHECK(still.round() == 2);
	CHECK(ids(still.state().tuples) == ids(before));

	UpdateSchedule wipe;
	wipe.delete_fraction = 1.0;
	HiddenDatabase gone(data.schema, data.initial, 10, wipe);
	gone.advance_round();
	CHECK(gone.size() == 0);

	DatabaseState bare;
	bare.tuples = before;
	Rng rng(1);
	TupleId next = 1000;
	InsertSource none;
	auto after = apply_update(bare, wipe, none, rng, next);
	CHECK(after.size() == 0);
	CHECK(after.round_index == bare.round_index + 1);
}

TEST_CASE("insert sources") {
	auto pool = InsertSource::pool({{0, 1}, {1, 1}});
	Rng rng(1);
	CHECK(pool.remaining() == 2);
	CHECK(pool.next(rng) == std::vector<Value>{0, 1});
	pool.next(rng);
	CHECK_THROWS_AS(pool.next(rng), ScheduleError);

	auto schema = Schema::boolean(2);
	auto gen = InsertSource::uniform(schema, {{0, 0}, {0, 1}, {1, 0}});
	CHECK(gen.next(rng) == std::vector<Value>{1, 1});
	CHECK_THROWS_AS(gen.next(rng), ScheduleError);
}

TEST_CASE("constant mode spreads events over the round") {
	auto data = generate_boolean_db(200, 12, 8);
	UpdateSchedule sched;
	sched.inserts_per_round = 10;
	sched.delete_fraction = 0.05;
	sched.mode = UpdateMode::constant;
	sched.queries_per_round = 100;
	sched.seed = 2;
	HiddenDatabase db(data.schema, data.initial, 10, sched, InsertSource::uniform(data.schema, data.initial));
	db.advance_round();
	CHECK(db.size() == 200);
	CHECK(db.pending_events() == 20);

	BudgetLedger ledger(100);
	std::size_t last = db.pending_events();
	for (int i = 0; i < 50; ++i) {
		db.search({}, ledger);
		CHECK(db.pending_events() <= last);
		last = db.pending_events();
	}
	CHECK(db.pending_events() > 0);
	CHECK(db.pending_events() < 20);
	db.flush_pending();
	CHECK(db.pending_events() == 0);
	CHECK(db.size() == 200 - 10 + 10);

	// a copy replays the same trajectory
	HiddenDatabase a(data.schema, data.initial, 10, sched, InsertSource::uniform(data.schema, data.initial));
	a.advance_round();
	auto b = a;
	a.flush_pending();
	b.flush_pending();
	CHECK(ids(a.state().tuples) == ids(b.state().tuples));
}
