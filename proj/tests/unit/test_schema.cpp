#include "hidden_agg/aggregate.hpp"
#include "hidden_agg/dataset.hpp"
#include "hidden_agg/errors.hpp"
#include "hidden_agg/rng.hpp"
#include "hidden_agg/schema.hpp"
#include "hidden_agg/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

using namespace hidden_agg;

namespace {

std::string fixture(const char *name) {
	return std::string(FIXTURE_DIR) + "/" + name;
}

DatabaseState state_of(const std::vector<std::vector<Value>> &rows) {
	DatabaseState db;
	TupleId id = 0;
	for (auto &r : rows) {
		db.tuples.push_back({id++, r});
	}
	return db;
}

} // namespace

TEST_CASE("schema validation") {
	CHECK_THROWS_AS(Schema(std::vector<Attribute>{}), SchemaError);
	CHECK_THROWS_AS(Schema(std::vector<Attribute>{{"a", {"x"}}}), SchemaError);
	CHECK_THROWS_AS(Schema(std::vector<Attribute>{{"a", {"x", "x"}}}), SchemaError);
	CHECK_THROWS_AS(Schema({{"a", {"x", "y"}}, {"b", {"0", "1"}}}, {0, 0}), SchemaError);

	Schema s({{"a", {"x", "y", "z"}}, {"b", {"0", "1"}}}, {1, 0});
	CHECK(s.level_order() == std::vector<std::size_t>{1, 0});
	CHECK(s.attribute_index("b") == 1);
	CHECK(s.value_code(0, "z") == 2);
	CHECK(s.value_name(0, 1) == "y");
	CHECK_THROWS_AS(s.attribute_index("c"), SchemaError);
	CHECK_THROWS_AS(s.value_code(0, "w"), SchemaError);
	CHECK_FALSE(s.numeric_value(0, 0).has_value());
	CHECK(*s.numeric_value(1, 1) == 1.0);

	const std::vector<Value> ok{2, 1};
	const std::vector<Value> bad{3, 1};
	CHECK(s.conforms(ok));
	CHECK_FALSE(s.conforms(bad));

	auto b = Schema::boolean(4);
	CHECK(b.size() == 4);
	CHECK(b.attribute(0).name == "A1");
	CHECK(b.domain_size(3) == 2);
}

TEST_CASE("selection evaluation") {
	auto s = Schema::boolean(3);
	Tuple t{0, {1, 0, 0}};
	CHECK(matches(t, {}));
	const std::vector<Predicate> one{{1, 0}};
	CHECK(matches(t, one));
	const std::vector<Predicate> two{{1, 0}, {2, 1}};
	CHECK_FALSE(matches(t, two));

	auto spec = AggregateSpec::count(two);
	CHECK_FALSE(eval_selection(spec, s, t));
	auto out_of_range = AggregateSpec::count({{5, 0}});
	CHECK_THROWS_AS(eval_selection(out_of_range, s, t), SchemaError);

	const std::vector<Predicate> contradiction{{1, 0}, {1, 1}};
	try {
		validate_condition(s, contradiction);
		FAIL("contradiction accepted");
	} catch (const SchemaError &e) {
		const std::string what = e.what();
		CHECK(what.find('0') != std::string::npos);
		CHECK(what.find('1') != std::string::npos);
	}
}

TEST_CASE("ground truth") {
	auto s = Schema::boolean(1);
	auto seven = state_of({{0}, {1}, {0}, {1}, {0}, {1}, {0}});
	CHECK(ground_truth(AggregateSpec::count(), s, seven) == 7);

	auto three = state_of({{1}, {0}, {1}});
	CHECK(ground_truth(AggregateSpec::sum(0), s, three) == 2);
	CHECK(ground_truth(AggregateSpec::avg(0), s, three) == doctest::Approx(2.0 / 3.0));
	CHECK_THROWS_AS(ground_truth(AggregateSpec::avg(0, {{0, 1}}), s, state_of({{0}})), UndefinedAggregate);

	auto delta = AggregateSpec::count();
	delta.kind = AggregateKind::size_delta;
	const std::vector<double> sizes{5000, 5050};
	CHECK(compose_truth(delta, sizes) == 50);
	const DatabaseState *prior[] = {&three};
	CHECK(ground_truth(delta, s, seven, prior) == 4);
	CHECK_THROWS(ground_truth(delta, s, seven));

	auto window = AggregateSpec::count();
	window.kind = AggregateKind::running_average;
	window.window = 2;
	const std::vector<double> history{1, 2, 4};
	CHECK(compose_truth(window, history) == 3);

	auto bad = AggregateSpec::sum(0);
	bad.kind = AggregateKind::running_average;
	bad.window = 0;
	CHECK_THROWS_AS(validate(bad, s), SchemaError);
}

TEST_CASE("ground truth matches a direct scan") {
	auto s = Schema::boolean(6);
	Rng rng(7);
	std::vector<std::vector<Value>> rows;
	for (int i = 0; i < 500; ++i) {
		std::vector<Value> r;
		for (int a = 0; a < 6; ++a) {
			r.push_back(static_cast<Value>(uniform_index(rng, 2)));
		}
		rows.push_back(r);
	}
	auto db = state_of(rows);
	for (Value v : {Value(0), Value(1)}) {
		const std::vector<Predicate> sel{{2, v}, {4, 1}};
		std::size_t count = 0;
		double sum = 0;
		for (auto &r : rows) {
			if (r[2] == v && r[4] == 1) {
				++count;
				sum += r[0];
			}
		}
		CHECK(single_round_value(AggregateSpec::count(sel), s, db) == count);
		CHECK(single_round_value(AggregateSpec::sum(0, sel), s, db) == sum);
	}
}

TEST_CASE("sample statistics") {
	const std::vector<double> a{1, 2, 3};
	const std::vector<double> c{5, 5, 5, 5};
	const std::vector<double> b{0, 2};
	CHECK(sample_variance(a) == 1.0);
	CHECK(sample_variance(c) == 0.0);
	CHECK(sample_variance(b) == 2.0);
	CHECK_THROWS_AS(sample_variance(std::vector<double>{1}), UndefinedAggregate);
	CHECK(population_variance(a) == doctest::Approx(2.0 / 3.0));
	CHECK(mean_squared_error(a, 0) == doctest::Approx(14.0 / 3.0));

	// MSE splits exactly into squared bias plus population variance.
	Rng rng(3);
	std::vector<double> x;
	for (int i = 0; i < 1000; ++i) {
		x.push_back(uniform01(rng) * 10);
	}
	const double truth = 4.2;
	const double bias = mean(x) - truth;
	CHECK(mean_squared_error(x, truth) == doctest::Approx(bias * bias + population_variance(x)).epsilon(1e-12));
}

TEST_CASE("rng helpers") {
	Rng rng(11);
	auto picked = sample_without_replacement(rng, 50, 20);
	CHECK(picked.size() == 20);
	CHECK(std::set<std::size_t>(picked.begin(), picked.end()).size() == 20);
	for (int i = 0; i < 1000; ++i) {
		CHECK(uniform_index(rng, 7) < 7);
	}
	CHECK(mix_seed(1, 2) != mix_seed(1, 3));
	CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}

TEST_CASE("boolean generator") {
	auto d = generate_boolean_db(5000, 30, 1);
	CHECK(d.initial.size() == 5000);
	CHECK(d.schema.size() == 30);
	std::set<std::vector<Value>> distinct(d.initial.begin(), d.initial.end());
	CHECK(distinct.size() == 5000);

	CHECK(generate_boolean_db(0, 5, 1).initial.empty());

	auto full = generate_boolean_db(16, 4, 2);
	CHECK(std::set<std::vector<Value>>(full.initial.begin(), full.initial.end()).size() == 16);
	CHECK_THROWS_AS(generate_boolean_db(16, 4, 2, 1), InfeasibleError);

	auto pooled = generate_boolean_db(10, 8, 5, 6);
	CHECK(pooled.reserve.size() == 6);
	std::set<std::vector<Value>> all(pooled.initial.begin(), pooled.initial.end());
	all.insert(pooled.reserve.begin(), pooled.reserve.end());
	CHECK(all.size() == 16);

	CHECK(generate_boolean_db(100, 12, 9).initial == generate_boolean_db(100, 12, 9).initial);
}

TEST_CASE("csv loading") {
	auto d = load_csv_db(fixture("ten_rows.csv"), {7, std::nullopt}, 1);
	CHECK(d.initial.size() == 7);
	CHECK(d.reserve.size() == 3);
	CHECK(d.schema.size() == 3);
	CHECK(d.schema.attribute(0).domain == std::vector<std::string>{"audi", "bmw", "fiat"});
	CHECK(d.schema.attribute(2).domain == std::vector<std::string>{"2", "4"});

	auto half = load_csv_db(fixture("ten_rows.csv"), {std::nullopt, 0.5}, 1);
	CHECK(half.initial.size() == 5);

	CHECK_THROWS_AS(load_csv_db(fixture("ten_rows.csv"), {11, std::nullopt}, 1), std::invalid_argument);

	try {
		read_csv_table(fixture("duplicate_rows.csv"));
		FAIL("duplicates accepted");
	} catch (const ParseError &e) {
		const std::string what = e.what();
		CHECK(what.find("2") != std::string::npos);
		CHECK(what.find("4") != std::string::npos);
	}
	CHECK_THROWS_AS(read_csv_table(fixture("ragged.csv")), ParseError);
	CHECK_THROWS_AS(read_csv_table(fixture("missing.csv")), ParseError);
}

TEST_CASE("csv round trip") {
	auto table = read_csv_table(fixture("ten_rows.csv"));
	const auto path = (std::filesystem::temp_directory_path() / "hidden_agg_roundtrip.csv").string();
	write_csv_table(path, table.schema, table.rows);
	auto again = read_csv_table(path);
	CHECK(again.rows == table.rows);
	std::filesystem::remove(path);
}
