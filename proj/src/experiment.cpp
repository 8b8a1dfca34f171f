#include "hidden_agg/experiment.hpp"

#include "hidden_agg/dataset.hpp"
#include "hidden_agg/errors.hpp"
#include "hidden_agg/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>
#include <tuple>

namespace hidden_agg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json &j, std::initializer_list<const char *> known, const std::string &where) {
	for (const auto &[key, _] : j.items()) {
		if (std::none_of(known.begin(), known.end(), [&](const char *k) { return key == k; })) {
			throw ParseError("unknown key '" + key + "' in " + where);
		}
	}
}

template <class T>
void read_if(const json &j, const char *key, T &into) {
	if (j.contains(key)) {
		into = j.at(key).get<T>();
	}
}

AggFn parse_agg_fn(const std::string &s) {
	if (s == "count" || s == "COUNT") {
		return AggFn::count;
	}
	if (s == "sum" || s == "SUM") {
		return AggFn::sum;
	}
	if (s == "avg" || s == "AVG") {
		return AggFn::avg;
	}
	throw ParseError("unknown aggregate function '" + s + "'");
}

AggregateKind parse_kind(const std::string &s) {
	if (s == "single_round") {
		return AggregateKind::single_round;
	}
	if (s == "size_delta") {
		return AggregateKind::size_delta;
	}
	if (s == "running_average") {
		return AggregateKind::running_average;
	}
	throw ParseError("unknown aggregate kind '" + s + "'");
}

std::string fn_name(AggFn fn) {
	switch (fn) {
	case AggFn::count:
		return "count";
	case AggFn::sum:
		return "sum";
	case AggFn::avg:
		return "avg";
	}
	return "?";
}

UpdateMode parse_mode(const std::string &s) {
	if (s == "round") {
		return UpdateMode::round;
	}
	if (s == "constant") {
		return UpdateMode::constant;
	}
	throw ParseError("unknown update mode '" + s + "' (expected round or constant)");
}

ReissuePolicy parse_policy(const std::string &s) {
	if (s == "verify_parent") {
		return ReissuePolicy::verify_parent;
	}
	if (s == "trust_valid") {
		return ReissuePolicy::trust_valid;
	}
	throw ParseError("unknown reissue policy '" + s + "'");
}

} // namespace

ExperimentConfig parse_config(const std::string &json_text, ExperimentConfig cfg) {
	try {
		const auto root = json::parse(json_text);
		if (!root.is_object()) {
			throw ParseError("config must be a JSON object");
		}
		reject_unknown(root,
		               {"dataset", "simulator", "rounds", "trials", "estimators", "aggregates", "varpi", "reissue_policy",
		                "seed", "threads"},
		               "config");
		if (root.contains("dataset")) {
			const auto &d = root.at("dataset");
			reject_unknown(d, {"type", "m", "path"}, "dataset");
			read_if(d, "type", cfg.dataset.type);
			read_if(d, "m", cfg.dataset.m);
			read_if(d, "path", cfg.dataset.path);
		}
		if (root.contains("simulator")) {
			const auto &s = root.at("simulator");
			reject_unknown(s, {"n0", "schedule", "k", "G", "seed", "mode", "score"}, "simulator");
			read_if(s, "n0", cfg.simulator.n0);
			read_if(s, "k", cfg.simulator.k);
			read_if(s, "G", cfg.simulator.G);
			read_if(s, "seed", cfg.simulator.seed);
			read_if(s, "score", cfg.simulator.score);
			if (s.contains("mode")) {
				cfg.simulator.mode = parse_mode(s.at("mode").get<std::string>());
			}
			if (s.contains("schedule")) {
				const auto &sc = s.at("schedule");
				reject_unknown(sc, {"inserts_per_round", "delete_fraction"}, "simulator.schedule");
				read_if(sc, "inserts_per_round", cfg.simulator.inserts_per_round);
				read_if(sc, "delete_fraction", cfg.simulator.delete_fraction);
			}
		}
		read_if(root, "rounds", cfg.rounds);
		read_if(root, "trials", cfg.trials);
		read_if(root, "varpi", cfg.varpi);
		read_if(root, "seed", cfg.seed);
		read_if(root, "threads", cfg.threads);
		if (root.contains("reissue_policy")) {
			cfg.policy = parse_policy(root.at("reissue_policy").get<std::string>());
		}
		if (root.contains("estimators")) {
			cfg.estimators.clear();
			for (const auto &e : root.at("estimators")) {
				cfg.estimators.push_back(parse_estimator_kind(e.get<std::string>()));
			}
		}
		if (root.contains("aggregates")) {
			cfg.aggregates.clear();
			for (const auto &a : root.at("aggregates")) {
				reject_unknown(a, {"id", "agg", "measure", "selection", "kind", "window", "subtree"}, "aggregate");
				AggregateConfig ac;
				read_if(a, "id", ac.id);
				if (a.contains("agg")) {
					ac.agg = parse_agg_fn(a.at("agg").get<std::string>());
				}
				read_if(a, "measure", ac.measure);
				if (a.contains("selection")) {
					for (const auto &[name, value] : a.at("selection").items()) {
						ac.selection.emplace_back(name, value.get<std::string>());
					}
				}
				if (a.contains("kind")) {
					ac.kind = parse_kind(a.at("kind").get<std::string>());
				}
				read_if(a, "window", ac.window);
				read_if(a, "subtree", ac.subtree);
				cfg.aggregates.push_back(std::move(ac));
			}
		}
	} catch (const json::exception &e) {
		throw ParseError(std::string("config: ") + e.what());
	}
	validate(cfg);
	return cfg;
}

std::string config_to_json(const ExperimentConfig &cfg) {
	json root;
	root["dataset"] = {{"type", cfg.dataset.type}, {"m", cfg.dataset.m}, {"path", cfg.dataset.path}};
	const auto &s = cfg.simulator;
	root["simulator"] = {
	    {"n0", s.n0},
	    {"k", s.k},
	    {"G", s.G},
	    {"seed", s.seed},
	    {"mode", s.mode == UpdateMode::round ? "round" : "constant"},
	    {"score", s.score},
	    {"schedule", {{"inserts_per_round", s.inserts_per_round}, {"delete_fraction", s.delete_fraction}}},
	};
	root["rounds"] = cfg.rounds;
	root["trials"] = cfg.trials;
	root["varpi"] = cfg.varpi;
	root["seed"] = cfg.seed;
	root["threads"] = cfg.threads;
	root["reissue_policy"] = cfg.policy == ReissuePolicy::verify_parent ? "verify_parent" : "trust_valid";
	json est = json::array();
	for (auto e : cfg.estimators) {
		est.push_back(to_string(e));
	}
	root["estimators"] = est;
	json aggs = json::array();
	for (const auto &a : cfg.aggregates) {
		json sel = json::object();
		for (const auto &[name, value] : a.selection) {
			sel[name] = value;
		}
		json kind = a.kind == AggregateKind::single_round ? "single_round"
		            : a.kind == AggregateKind::size_delta ? "size_delta"
		                                                  : "running_average";
		aggs.push_back({{"id", a.id},
		                {"agg", fn_name(a.agg)},
		                {"measure", a.measure},
		                {"selection", sel},
		                {"kind", kind},
		                {"window", a.window},
		                {"subtree", a.subtree}});
	}
	root["aggregates"] = aggs;
	return root.dump(2);
}

void validate(const ExperimentConfig &cfg) {
	auto fail = [](const std::string &msg) { throw ParseError("config: " + msg); };
	if (cfg.dataset.type != "boolean" && cfg.dataset.type != "csv") {
		fail("dataset.type must be boolean or csv");
	}
	if (cfg.dataset.type == "boolean" && cfg.dataset.m < 1) {
		fail("dataset.m must be >= 1");
	}
	if (cfg.dataset.type == "csv" && cfg.dataset.path.empty()) {
		fail("dataset.path is required for a csv dataset");
	}
	if (cfg.rounds < 1) {
		fail("rounds must be >= 1");
	}
	if (cfg.trials < 1) {
		fail("trials must be >= 1");
	}
	if (cfg.simulator.k < 1) {
		fail("simulator.k must be >= 1");
	}
	if (cfg.simulator.G < 1) {
		fail("simulator.G must be >= 1");
	}
	if (!(cfg.simulator.delete_fraction >= 0 && cfg.simulator.delete_fraction <= 1)) {
		fail("schedule.delete_fraction must lie in [0, 1]");
	}
	if (cfg.simulator.score != "random" && cfg.simulator.score != "value_ordered") {
		fail("simulator.score must be random or value_ordered");
	}
	if (cfg.estimators.empty()) {
		fail("at least one estimator is required");
	}
	if (cfg.aggregates.empty()) {
		fail("at least one aggregate is required");
	}
	std::set<std::string> ids;
	for (const auto &a : cfg.aggregates) {
		if (!ids.insert(a.id).second) {
			fail("duplicate aggregate id '" + a.id + "'");
		}
		if (a.agg != AggFn::count && a.measure.empty()) {
			fail("aggregate '" + a.id + "' needs a measure attribute");
		}
	}
}

AggregateSpec resolve(const AggregateConfig &a, const Schema &schema) {
	AggregateSpec spec;
	spec.id = a.id;
	spec.agg = a.agg;
	spec.kind = a.kind;
	spec.window = a.window;
	if (a.agg != AggFn::count) {
		spec.measure = Measure::of(schema.attribute_index(a.measure));
	}
	for (const auto &[name, value] : a.selection) {
		const auto attr = schema.attribute_index(name);
		spec.selection.push_back({attr, schema.value_code(attr, value)});
	}
	validate(spec, schema);
	return spec;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

namespace {

struct TrialResult {
	std::vector<MetricsRow> rows;
	RunStats stats;
};

TrialResult run_trial(const ExperimentConfig &cfg, std::size_t trial, const CsvTable *table) {
	const auto &sim = cfg.simulator;
	const auto data_seed = mix_seed(sim.seed, 2 * trial + 1);
	Dataset data = table ? split_table(*table, {sim.n0, std::nullopt}, data_seed)
	                     : generate_boolean_db(sim.n0, cfg.dataset.m, data_seed);
	InsertSource source = table ? InsertSource::pool(std::move(data.reserve))
	                            : InsertSource::uniform(data.schema, data.initial);

	UpdateSchedule schedule;
	schedule.inserts_per_round = sim.inserts_per_round;
	schedule.delete_fraction = sim.delete_fraction;
	schedule.mode = sim.mode;
	schedule.seed = mix_seed(sim.seed, 2 * trial + 2);
	schedule.queries_per_round = sim.G;
	ScoreFunction score;
	if (sim.score == "value_ordered") {
		score = value_ordered_scores(data.schema);
	}
	HiddenDatabase reference(data.schema, data.initial, sim.k, schedule, std::move(source), score);

	std::vector<AggregateSpec> specs;
	std::vector<QueryTree> trees;
	std::set<std::vector<std::size_t>> orders;
	for (const auto &a : cfg.aggregates) {
		specs.push_back(resolve(a, data.schema));
		trees.push_back(a.subtree ? QueryTree(data.schema, specs.back().selection) : QueryTree(data.schema));
		if (orders.insert(trees.back().attribute_order()).second) {
			reference.add_index(trees.back().attribute_order());
		}
	}

	struct Lane {
		std::string estimator;
		std::size_t aggregate = 0;
		std::unique_ptr<Estimator> est;
		std::size_t cum = 0;
	};
	std::vector<Lane> lanes;
	const auto trial_seed = mix_seed(cfg.seed, trial);
	for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
		for (std::size_t a = 0; a < specs.size(); ++a) {
			EstimatorOptions opt;
			opt.seed = mix_seed(trial_seed, e * 1024 + a);
			opt.policy = cfg.policy;
			opt.varpi = cfg.varpi;
			lanes.push_back({to_string(cfg.estimators[e]), a, make_estimator(cfg.estimators[e], trees[a], specs[a], opt), 0});
		}
	}

	TrialResult result;
	std::vector<std::vector<double>> truth_history(specs.size());
	for (std::size_t r = 1; r <= cfg.rounds; ++r) {
		if (r > 1) {
			reference.advance_round();
		}
		std::vector<RoundEstimate> estimates(lanes.size());
		std::vector<bool> ok(lanes.size(), false);
		std::vector<std::size_t> used(lanes.size(), 0);
		for (std::size_t l = 0; l < lanes.size(); ++l) {
			BudgetLedger ledger(static_cast<std::int64_t>(sim.G));
			try {
				if (sim.mode == UpdateMode::round) {
					estimates[l] = lanes[l].est->run_round(reference, ledger);
				} else {
					// each estimator sees the round's events at its own query timeline
					HiddenDatabase timeline = reference;
					estimates[l] = lanes[l].est->run_round(timeline, ledger);
				}
				ok[l] = true;
			} catch (const NoEstimateError &) {
				++result.stats.failed_rounds;
			}
			used[l] = static_cast<std::size_t>(ledger.used());
			result.stats.max_round_queries = std::max(result.stats.max_round_queries, used[l]);
		}
		reference.flush_pending();

		std::vector<std::optional<double>> truths(specs.size());
		for (std::size_t a = 0; a < specs.size(); ++a) {
			double single = std::numeric_limits<double>::quiet_NaN();
			try {
				single = single_round_value(specs[a], data.schema, reference.state());
			} catch (const UndefinedAggregate &) {
			}
			truth_history[a].push_back(single);
			try {
				const double t = compose_truth(specs[a], truth_history[a]);
				if (!std::isnan(t)) {
					truths[a] = t;
				}
			} catch (const StateError &) {
			}
		}

		for (std::size_t l = 0; l < lanes.size(); ++l) {
			auto &lane = lanes[l];
			lane.cum += used[l];
			MetricsRow row;
			row.trial = trial;
			row.round = static_cast<int>(r);
			row.estimator = lane.estimator;
			row.aggregate = specs[lane.aggregate].id;
			if (ok[l]) {
				row.estimate = estimates[l].value;
			}
			row.truth = truths[lane.aggregate];
			if (row.estimate && row.truth && *row.truth != 0) {
				row.rel_error = std::abs(*row.estimate - *row.truth) / std::abs(*row.truth);
			}
			row.queries = used[l];
			row.cum_queries = lane.cum;
			result.rows.push_back(std::move(row));
		}
	}
	return result;
}

} // namespace

std::vector<MetricsRow> run_experiment(const ExperimentConfig &cfg, RunStats *stats) {
	validate(cfg);
	std::optional<CsvTable> table;
	if (cfg.dataset.type == "csv") {
		table = read_csv_table(cfg.dataset.path);
	}
	std::vector<TrialResult> results(cfg.trials);
	std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
	threads = std::min(threads, cfg.trials);

	std::atomic<std::size_t> next{0};
	std::exception_ptr failure;
	std::mutex failure_mutex;
	auto worker = [&] {
		for (;;) {
			const auto t = next.fetch_add(1);
			if (t >= cfg.trials) {
				return;
			}
			try {
				results[t] = run_trial(cfg, t, table ? &*table : nullptr);
			} catch (...) {
				std::lock_guard lock(failure_mutex);
				if (!failure) {
					failure = std::current_exception();
				}
				next = cfg.trials;
				return;
			}
		}
	};
	if (threads <= 1) {
		worker();
	} else {
		std::vector<std::thread> pool;
		for (std::size_t i = 0; i < threads; ++i) {
			pool.emplace_back(worker);
		}
		for (auto &th : pool) {
			th.join();
		}
	}
	if (failure) {
		std::rethrow_exception(failure);
	}

	std::vector<MetricsRow> rows;
	RunStats total;
	for (auto &r : results) {
		rows.insert(rows.end(), std::make_move_iterator(r.rows.begin()), std::make_move_iterator(r.rows.end()));
		total.max_round_queries = std::max(total.max_round_queries, r.stats.max_round_queries);
		total.failed_rounds += r.stats.failed_rounds;
	}
	if (stats) {
		*stats = total;
	}
	return rows;
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

const char *const metrics_header = "trial,round,estimator,aggregate,estimate,truth,rel_error,queries,cum_queries";

std::string format_double(double v) {
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

namespace {

std::string opt_field(const std::optional<double> &v) {
	return v ? format_double(*v) : std::string();
}

std::vector<std::string> split_commas(const std::string &line) {
	std::vector<std::string> out;
	std::size_t start = 0;
	for (;;) {
		const auto pos = line.find(',', start);
		out.push_back(line.substr(start, pos - start));
		if (pos == std::string::npos) {
			return out;
		}
		start = pos + 1;
	}
}

template <class T>
T parse_number(const std::string &s, std::size_t line_no, const char *column) {
	T v{};
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
	if (ec != std::errc() || ptr != s.data() + s.size()) {
		throw ParseError("metrics line " + std::to_string(line_no) + ": bad " + column + " '" + s + "'");
	}
	return v;
}

std::optional<double> parse_optional(const std::string &s, std::size_t line_no, const char *column) {
	if (s.empty()) {
		return std::nullopt;
	}
	return parse_number<double>(s, line_no, column);
}

} // namespace

void write_metrics_csv(std::ostream &out, const std::vector<MetricsRow> &rows) {
	out << metrics_header << '\n';
	for (const auto &r : rows) {
		out << r.trial << ',' << r.round << ',' << r.estimator << ',' << r.aggregate << ',' << opt_field(r.estimate)
		    << ',' << opt_field(r.truth) << ',' << opt_field(r.rel_error) << ',' << r.queries << ',' << r.cum_queries
		    << '\n';
	}
}

std::vector<MetricsRow> read_metrics_csv(std::istream &in) {
	std::string line;
	std::size_t line_no = 0;
	std::vector<MetricsRow> rows;
	while (std::getline(in, line)) {
		++line_no;
		if (!line.empty() && line.back() == '\r') {
			line.pop_back();
		}
		if (line_no == 1) {
			if (line != metrics_header) {
				throw ParseError("metrics line 1: unexpected header '" + line + "'");
			}
			continue;
		}
		if (line.empty()) {
			continue;
		}
		const auto f = split_commas(line);
		if (f.size() != 9) {
			throw ParseError("metrics line " + std::to_string(line_no) + ": expected 9 fields, found " +
			                 std::to_string(f.size()));
		}
		MetricsRow r;
		r.trial = parse_number<std::size_t>(f[0], line_no, "trial");
		r.round = parse_number<int>(f[1], line_no, "round");
		r.estimator = f[2];
		r.aggregate = f[3];
		r.estimate = parse_optional(f[4], line_no, "estimate");
		r.truth = parse_optional(f[5], line_no, "truth");
		r.rel_error = parse_optional(f[6], line_no, "rel_error");
		r.queries = parse_number<std::size_t>(f[7], line_no, "queries");
		r.cum_queries = parse_number<std::size_t>(f[8], line_no, "cum_queries");
		rows.push_back(std::move(r));
	}
	if (line_no == 0) {
		throw ParseError("metrics file is empty");
	}
	return rows;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<MetricsRow> &rows) {
	struct Acc {
		std::vector<double> est;
		std::vector<double> truth;
		std::vector<double> err;
		std::vector<double> rel;
		std::size_t undefined = 0;
	};
	std::map<std::tuple<int, std::string, std::string>, Acc> groups;
	for (const auto &r : rows) {
		auto &acc = groups[{r.round, r.estimator, r.aggregate}];
		if (!r.estimate || !r.truth) {
			++acc.undefined;
			continue;
		}
		acc.est.push_back(*r.estimate);
		acc.truth.push_back(*r.truth);
		acc.err.push_back(*r.estimate - *r.truth);
		if (r.rel_error) {
			acc.rel.push_back(*r.rel_error);
		}
	}
	std::vector<SummaryRow> out;
	for (auto &[key, acc] : groups) {
		SummaryRow s;
		std::tie(s.round, s.estimator, s.aggregate) = key;
		s.trials = acc.est.size();
		s.undefined = acc.undefined;
		if (!acc.est.empty()) {
			s.mean_estimate = mean(acc.est);
			s.mean_truth = mean(acc.truth);
			s.bias = mean(acc.err);
			s.mse = mean_squared_error(acc.err, 0.0);
			s.min_estimate = *std::min_element(acc.est.begin(), acc.est.end());
			s.max_estimate = *std::max_element(acc.est.begin(), acc.est.end());
			if (acc.est.size() >= 2) {
				s.variance = sample_variance(acc.est);
				s.std_error = std::sqrt(*s.variance / static_cast<double>(acc.est.size()));
			}
		}
		if (!acc.rel.empty()) {
			s.mean_rel_error = mean(acc.rel);
		}
		out.push_back(std::move(s));
	}
	return out;
}

void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows) {
	out << "round,estimator,aggregate,trials,mean_estimate,mean_truth,bias,variance,std_error,mse,mean_rel_error,"
	       "min_estimate,max_estimate,undefined\n";
	for (const auto &s : rows) {
		out << s.round << ',' << s.estimator << ',' << s.aggregate << ',' << s.trials << ','
		    << format_double(s.mean_estimate) << ',' << format_double(s.mean_truth) << ',' << format_double(s.bias)
		    << ',' << opt_field(s.variance) << ',' << opt_field(s.std_error) << ',' << format_double(s.mse) << ','
		    << opt_field(s.mean_rel_error) << ',' << format_double(s.min_estimate) << ','
		    << format_double(s.max_estimate) << ',' << s.undefined << '\n';
	}
}

} // namespace hidden_agg
