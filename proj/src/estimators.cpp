#include "hidden_agg/estimators.hpp"

#include "hidden_agg/errors.hpp"
#include "hidden_agg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hidden_agg {

Contribution drill_contribution(const AggregateSpec &spec, const QueryTree &tree, const SearchQuery &terminal,
                                const QueryOutcome &outcome) {
	if (outcome.status == QueryStatus::overflow) {
		throw std::logic_error("drill-down terminal overflows; it is not a top non-overflowing query");
	}
	Contribution c;
	if (outcome.returned.empty()) {
		return c;
	}
	const auto &schema = tree.schema();
	for (const auto &t : outcome.returned) {
		if (!matches(t, spec.selection)) {
			continue;
		}
		c.num += spec.measure(schema, t.values);
		c.den += 1.0;
	}
	const double scale = tree.inverse_p(terminal);
	c.num *= scale;
	c.den *= scale;
	return c;
}

double single_estimate(const AggregateSpec &spec, const QueryTree &tree, const SearchQuery &terminal,
                       const QueryOutcome &outcome) {
	if (spec.agg == AggFn::avg) {
		throw std::invalid_argument("AVG is estimated as a ratio of SUM and COUNT estimates");
	}
	return drill_contribution(spec, tree, terminal, outcome).num;
}

double f_q_update(AggregateKind kind, const UpdateInputs &in) {
	const bool fresh = !in.y_x.has_value();
	if (kind == AggregateKind::size_delta) {
		if (!fresh && in.x == in.j - 1) {
			return in.y_j - *in.y_x;
		}
		if (!in.estimate_prev) {
			throw StateError("size_delta update needs the previous round's estimate");
		}
		return in.y_j - *in.estimate_prev;
	}
	if (fresh) {
		return in.y_j;
	}
	if (!in.estimate_x) {
		throw StateError("update of a round-" + std::to_string(in.x) + " drill-down needs that round's estimate");
	}
	return *in.estimate_x + in.y_j - *in.y_x;
}

std::string to_string(EstimatorKind kind) {
	switch (kind) {
	case EstimatorKind::restart:
		return "restart";
	case EstimatorKind::reissue:
		return "reissue";
	case EstimatorKind::rs:
		return "rs";
	}
	return "?";
}

EstimatorKind parse_estimator_kind(const std::string &name) {
	if (name == "restart") {
		return EstimatorKind::restart;
	}
	if (name == "reissue") {
		return EstimatorKind::reissue;
	}
	if (name == "rs") {
		return EstimatorKind::rs;
	}
	throw ParseError("unknown estimator '" + name + "' (expected restart, reissue or rs)");
}

// ---------------------------------------------------------------------------
// Estimator
// ---------------------------------------------------------------------------

Estimator::Estimator(QueryTree tree, AggregateSpec spec, EstimatorOptions options)
    : tree_(std::move(tree)), spec_(std::move(spec)), options_(options), rng_(options.seed) {
	validate(spec_, tree_.schema());
}

const Estimator::BaseState *Estimator::base_at(int round) const {
	auto it = bases_.find(round);
	return it == bases_.end() ? nullptr : &it->second;
}

double Estimator::ratio(const Contribution &c) const {
	if (spec_.agg != AggFn::avg) {
		return c.num;
	}
	return c.den != 0 ? c.num / c.den : std::numeric_limits<double>::quiet_NaN();
}

RoundEstimate Estimator::run_round(HiddenDatabase &db, BudgetLedger &ledger) {
	RoundEstimate out;
	out.round = db.round();
	const auto used_before = ledger.used();
	auto base = estimate_round(db, ledger, out.round, out);
	out.queries = static_cast<std::size_t>(ledger.used() - used_before);

	if (base) {
		bases_[out.round] = *base;
		out.variance = base->variance;
		const double single = ratio(base->value);
		if (std::isnan(single)) {
			out.flags.push_back("AVG undefined: estimated COUNT is zero");
		} else {
			out.base = single;
		}
	}

	if (out.base) {
		switch (spec_.kind) {
		case AggregateKind::single_round:
			out.value = out.base;
			break;
		case AggregateKind::size_delta:
			if (!out.value) {
				const auto *prev = base_at(out.round - 1);
				const double before = prev ? ratio(prev->value) : std::numeric_limits<double>::quiet_NaN();
				if (!std::isnan(before)) {
					out.value = *out.base - before;
				} else {
					out.flags.push_back("size_delta undefined: no estimate for the previous round");
				}
			}
			break;
		case AggregateKind::running_average: {
			double sum = 0;
			std::size_t n = 0;
			for (int r = out.round; r > out.round - static_cast<int>(spec_.window) && r >= 1; --r) {
				const auto *b = base_at(r);
				if (b && !std::isnan(ratio(b->value))) {
					sum += ratio(b->value);
					++n;
				}
			}
			out.value = sum / static_cast<double>(n);
			break;
		}
		}
	}

	rounds_.push_back(out);
	if (!base) {
		throw NoEstimateError("round " + std::to_string(out.round) + ": no drill-down completed within " +
		                      std::to_string(ledger.budget()) + " queries");
	}
	return out;
}

namespace {

HistoryEntry make_entry(const AggregateSpec &spec, const QueryTree &tree, int round, DrillResult &r) {
	HistoryEntry e;
	e.round = round;
	e.estimate = drill_contribution(spec, tree, r.terminal, r.outcome);
	e.contribution = e.estimate;
	e.inverse_p = tree.inverse_p(r.terminal);
	e.terminal = std::move(r.terminal);
	e.outcome = std::move(r.outcome);
	e.cost = r.cost;
	return e;
}

double variance_of_mean(std::span<const double> values) {
	if (values.size() < 2) {
		return std::numeric_limits<double>::infinity();
	}
	return sample_variance(values) / static_cast<double>(values.size());
}

} // namespace

std::optional<std::size_t> Estimator::start_new(HiddenDatabase &db, BudgetLedger &ledger, int j) {
	Signature sig;
	DrillResult r;
	if (!carried_.empty()) {
		auto [carried_sig, node] = std::move(carried_.front());
		carried_.erase(carried_.begin());
		sig = std::move(carried_sig);
		r = reissue(db, tree_, node, sig, ledger, options_.policy);
	} else {
		sig = tree_.random_signature(rng_);
		r = drill_down(db, tree_, tree_.root(), sig, ledger);
	}
	if (!r.complete) {
		if (carry_partial_) {
			carried_.emplace_back(std::move(sig), std::move(r.terminal));
		}
		return std::nullopt;
	}
	new_cost_sum_ += static_cast<double>(r.cost);
	++new_cost_count_;
	DrillDownRecord rec;
	rec.signature = std::move(sig);
	rec.history.push_back(make_entry(spec_, tree_, j, r));
	records_.push_back(std::move(rec));
	return records_.size() - 1;
}

double Estimator::new_drill_cost() const {
	return new_cost_count_ ? new_cost_sum_ / static_cast<double>(new_cost_count_) : 1.0;
}

bool Estimator::update_record(HiddenDatabase &db, BudgetLedger &ledger, std::size_t index, int j) {
	auto &rec = records_.at(index);
	auto r = reissue(db, tree_, rec.history.back().terminal, rec.signature, ledger, options_.policy);
	if (!r.complete) {
		return false;
	}
	rec.history.push_back(make_entry(spec_, tree_, j, r));
	return true;
}

Estimator::BaseState Estimator::mean_of_latest(const std::vector<std::size_t> &indices, RoundEstimate &out) const {
	std::vector<double> num;
	std::vector<double> den;
	num.reserve(indices.size());
	den.reserve(indices.size());
	for (auto i : indices) {
		const auto &e = records_[i].history.back();
		num.push_back(e.contribution.num);
		den.push_back(e.contribution.den);
	}
	out.completed = indices.size();
	BaseState s;
	s.value = {mean(num), mean(den)};
	s.variance = variance_of_mean(num);
	if (indices.size() < 2) {
		out.flags.push_back("one drill-down: variance unknown");
	}
	return s;
}

RestartEstimator::RestartEstimator(QueryTree tree, AggregateSpec spec, EstimatorOptions options)
    : Estimator(std::move(tree), std::move(spec), options) {
	carry_partial_ = false;
}

std::optional<Estimator::BaseState> RestartEstimator::estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
                                                                     RoundEstimate &out) {
	std::vector<std::size_t> done;
	while (!ledger.exhausted()) {
		if (auto i = start_new(db, ledger, j)) {
			done.push_back(*i);
		}
	}
	if (done.empty()) {
		return std::nullopt;
	}
	return mean_of_latest(done, out);
}

std::optional<Estimator::BaseState> ReissueEstimator::estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
                                                                     RoundEstimate &out) {
	std::vector<std::size_t> done;
	const auto existing = records_.size();
	for (std::size_t i = 0; i < existing && !ledger.exhausted(); ++i) {
		if (update_record(db, ledger, i, j)) {
			done.push_back(i);
		}
	}
	while (!ledger.exhausted()) {
		if (auto i = start_new(db, ledger, j)) {
			done.push_back(*i);
		}
	}
	if (done.empty()) {
		return std::nullopt;
	}
	return mean_of_latest(done, out);
}

// ---------------------------------------------------------------------------
// RS
// ---------------------------------------------------------------------------

namespace {

struct ClassSample {
	Contribution f;
	//! this round's Q(q)/p(q)
	double y = 0;
	//! y_j - y_x for updates, y_j for new drill-downs
	double delta = 0;
	double size_delta = 0;
	double cost = 0;
};

struct WorkClass {
	int round = 0;
	bool fresh = false;
	std::vector<std::size_t> pending;
	std::size_t cursor = 0;
	std::vector<ClassSample> samples;
	std::size_t bootstrap = 0;
	std::size_t planned = 0;
	double expected_cost = 1;
	ClassProfile profile;
};

template <class F>
std::vector<double> collect(const std::vector<ClassSample> &samples, F field) {
	std::vector<double> out;
	out.reserve(samples.size());
	for (const auto &s : samples) {
		out.push_back(field(s));
	}
	return out;
}

struct Combined {
	double num = 0;
	double den = 0;
	std::vector<double> weights;
	bool fallback = false;
};

Combined combine_classes(const std::vector<double> &num, const std::vector<double> &den,
                         const std::vector<double> &v2) {
	Combined c;
	try {
		c.weights = multiround_combine(num, v2).weights;
	} catch (const InconsistencyError &) {
		c.fallback = true;
	} catch (const std::invalid_argument &) {
		c.fallback = true;
	}
	if (c.fallback) {
		c.weights.assign(num.size(), 1.0 / static_cast<double>(num.size()));
	}
	for (std::size_t i = 0; i < num.size(); ++i) {
		c.num += c.weights[i] * num[i];
		c.den += c.weights[i] * den[i];
	}
	return c;
}

} // namespace

std::optional<Estimator::BaseState> RsEstimator::estimate_round(HiddenDatabase &db, BudgetLedger &ledger, int j,
                                                                RoundEstimate &out) {
	std::map<int, std::vector<std::size_t>> by_round;
	for (std::size_t i = 0; i < records_.size(); ++i) {
		const int x = records_[i].last_updated_round();
		if (x < j && base_at(x)) {
			by_round[x].push_back(i);
		}
	}

	std::vector<WorkClass> classes;
	for (auto &[x, members] : by_round) {
		WorkClass c;
		c.round = x;
		c.pending = members;
		double cost = 0;
		for (auto i : members) {
			cost += static_cast<double>(records_[i].cost_last_update());
		}
		c.expected_cost = std::max(1.0, cost / static_cast<double>(members.size()));
		shuffle_in_place(rng_, c.pending);
		classes.push_back(std::move(c));
	}
	WorkClass fresh;
	fresh.round = j;
	fresh.fresh = true;
	fresh.expected_cost = std::max(1.0, new_drill_cost());
	classes.push_back(std::move(fresh));
	const std::size_t new_class = classes.size() - 1;

	const auto *prev = base_at(j - 1);
	const bool track_delta = spec_.kind == AggregateKind::size_delta && spec_.agg != AggFn::avg && prev;

	auto run_update = [&](WorkClass &c) {
		std::optional<std::size_t> index;
		if (c.fresh) {
			index = start_new(db, ledger, j);
		} else if (c.cursor < c.pending.size()) {
			const auto i = c.pending[c.cursor++];
			if (update_record(db, ledger, i, j)) {
				index = i;
			}
		}
		if (!index) {
			return;
		}
		auto &rec = records_[*index];
		auto &now = rec.history.back();
		ClassSample s;
		s.cost = static_cast<double>(now.cost);
		s.y = now.estimate.num;
		UpdateInputs in;
		in.x = c.round;
		in.j = j;
		if (c.fresh) {
			s.f = now.estimate;
			s.delta = now.estimate.num;
		} else {
			const auto &then = rec.history[rec.history.size() - 2];
			const auto *bx = base_at(c.round);
			in.y_x = then.estimate.num;
			in.y_j = now.estimate.num;
			in.estimate_x = bx->value.num;
			s.f.num = f_q_update(AggregateKind::single_round, in);
			in.y_x = then.estimate.den;
			in.y_j = now.estimate.den;
			in.estimate_x = bx->value.den;
			s.f.den = f_q_update(AggregateKind::single_round, in);
			s.delta = now.estimate.num - then.estimate.num;
		}
		if (track_delta) {
			in.y_j = now.estimate.num;
			in.y_x = c.fresh ? std::nullopt : std::optional<double>(rec.history[rec.history.size() - 2].estimate.num);
			in.estimate_prev = prev->value.num;
			s.size_delta = f_q_update(AggregateKind::size_delta, in);
		}
		now.contribution = s.f;
		c.samples.push_back(s);
	};

	// Every completed drill-down this round, updated or new, yields an independent
	// single estimate of the current aggregate; their spread estimates the variance
	// of one new drill-down.
	auto new_drill_variance = [&](double fallback) {
		std::vector<double> ys;
		for (auto &c : classes) {
			for (auto &s : c.samples) {
				ys.push_back(s.y);
			}
		}
		return ys.size() >= 2 ? sample_variance(ys) : fallback;
	};
	auto update_variance = [&](const WorkClass &c, double pooled) {
		if (c.fresh) {
			return pooled;
		}
		return c.samples.size() >= 2 ? sample_variance(collect(c.samples, [](auto &s) { return s.delta; })) : pooled;
	};

	const auto budget = ledger.remaining();
	std::size_t varpi = 0;
	if (classes.size() > 1) {
		double per_round = 0;
		for (auto &c : classes) {
			per_round += c.expected_cost;
		}
		// bootstrap at most half the budget, at the costs seen when each class was last updated
		const auto affordable = static_cast<std::size_t>(std::floor(static_cast<double>(budget) / (2.0 * per_round)));
		varpi = std::min(options_.varpi, std::max<std::size_t>(1, affordable));
		if (varpi < options_.varpi) {
			out.flags.push_back("bootstrap reduced to " + std::to_string(varpi) + " per class");
		}
	}

	for (auto &c : classes) {
		const std::size_t want = c.fresh ? varpi : std::min(varpi, c.pending.size());
		for (std::size_t b = 0; b < want && !ledger.exhausted(); ++b) {
			run_update(c);
		}
		c.bootstrap = c.samples.size();
	}

	const double previous_sigma2 = prev ? prev->variance : std::numeric_limits<double>::infinity();
	double sigma2_d = new_drill_variance(std::isfinite(previous_sigma2) ? previous_sigma2 : 0.0);

	if (classes.size() > 1) {
		double mean_cost = 0;
		std::size_t cost_n = 0;
		for (auto &c : classes) {
			for (auto &s : c.samples) {
				mean_cost += s.cost;
				++cost_n;
			}
		}
		mean_cost = cost_n ? mean_cost / static_cast<double>(cost_n) : 1.0;
		VarianceProfile profile;
		for (auto &c : classes) {
			auto &p = c.profile;
			p.round = c.round;
			p.samples = c.samples.size();
			p.alpha = update_variance(c, sigma2_d);
			p.pooled = !c.fresh && c.samples.size() < 2;
			if (p.pooled) {
				out.flags.push_back("class " + std::to_string(c.round) + " borrows the new-drill-down variance");
			}
			const double cs = std::accumulate(c.samples.begin(), c.samples.end(), 0.0,
			                                  [](double acc, auto &s) { return acc + s.cost; });
			p.cost = c.samples.empty() ? std::max(1.0, c.expected_cost)
			                           : std::max(1.0, cs / static_cast<double>(c.samples.size()));
			if (c.samples.empty() && cost_n == 0) {
				p.cost = std::max(1.0, mean_cost);
			}
			if (!c.fresh) {
				p.available = c.pending.size();
				p.beta = base_at(c.round)->variance;
				if (!std::isfinite(p.beta)) {
					p.beta = sigma2_d;
				}
			}
			profile.classes.push_back(p);
		}
		const auto plan = optimal_allocation(static_cast<double>(budget), profile);
		for (auto &f : plan.flags) {
			out.flags.push_back(f);
		}

		std::vector<std::size_t> omega;
		for (std::size_t ci = 0; ci < classes.size(); ++ci) {
			auto &c = classes[ci];
			c.planned = plan.counts[ci];
			std::size_t extra = plan.counts[ci] > c.bootstrap ? plan.counts[ci] - c.bootstrap : 0;
			if (!c.fresh) {
				extra = std::min(extra, c.pending.size() - c.cursor);
			}
			omega.insert(omega.end(), extra, ci);
		}
		shuffle_in_place(rng_, omega);
		for (auto ci : omega) {
			if (ledger.exhausted()) {
				break;
			}
			run_update(classes[ci]);
		}
	}
	while (!ledger.exhausted()) {
		run_update(classes[new_class]);
	}

	// this round's within-sample spreads, folded into the running pools at the end
	double round_y_ss = 0;
	double round_y_dof = 0;
	{
		std::vector<double> ys;
		for (auto &c : classes) {
			for (auto &s : c.samples) {
				ys.push_back(s.y);
			}
		}
		if (ys.size() >= 2) {
			round_y_dof = static_cast<double>(ys.size() - 1);
			round_y_ss = sample_variance(ys) * round_y_dof;
		}
	}
	double round_d_ss = 0;
	double round_d_dof = 0;
	for (auto &c : classes) {
		if (!c.fresh && c.samples.size() >= 2) {
			const double dof = static_cast<double>(c.samples.size() - 1);
			round_d_ss += update_variance(c, 0.0) * dof / static_cast<double>(j - c.round);
			round_d_dof += dof;
		}
	}
	const double s2 = y_dof_ > 0 ? y_ss_ / y_dof_ : (round_y_dof > 0 ? round_y_ss / round_y_dof : 0.0);
	const double rate = d_dof_ > 0 ? d_ss_ / d_dof_ : (round_d_dof > 0 ? round_d_ss / round_d_dof : s2);
	y_ss_ += round_y_ss;
	y_dof_ += round_y_dof;
	d_ss_ += round_d_ss;
	d_dof_ += round_d_dof;

	std::vector<double> num;
	std::vector<double> den;
	std::vector<double> v2;
	std::vector<double> dnum;
	std::vector<double> dv2;
	std::vector<std::size_t> used;
	std::size_t completed = 0;
	for (std::size_t ci = 0; ci < classes.size(); ++ci) {
		auto &c = classes[ci];
		ClassReport report;
		report.round = c.round;
		report.available = c.fresh ? 0 : c.pending.size();
		report.bootstrap = c.bootstrap;
		report.planned = c.planned;
		report.updates = c.samples.size();
		report.pooled = c.profile.pooled;
		report.cost = c.profile.cost;
		report.alpha = c.fresh ? s2 : rate * static_cast<double>(j - c.round);
		if (!c.fresh) {
			report.beta = base_at(c.round)->variance;
			if (!std::isfinite(report.beta)) {
				report.beta = s2;
			}
		}
		if (!c.samples.empty()) {
			const double n = static_cast<double>(c.samples.size());
			report.mean = mean(collect(c.samples, [](auto &s) { return s.f.num; }));
			report.variance = report.alpha / n + report.beta;
			num.push_back(report.mean);
			den.push_back(mean(collect(c.samples, [](auto &s) { return s.f.den; })));
			v2.push_back(report.variance);
			if (track_delta) {
				const bool direct = !c.fresh && c.round == j - 1;
				dnum.push_back(mean(collect(c.samples, [](auto &s) { return s.size_delta; })));
				dv2.push_back((direct ? rate : s2) / n + (direct ? 0.0 : prev->variance));
			}
			used.push_back(ci);
			completed += c.samples.size();
		}
		out.classes.push_back(report);
	}
	out.completed = completed;
	if (used.empty()) {
		return std::nullopt;
	}

	std::vector<std::size_t> hist;
	std::optional<std::size_t> fresh_slot;
	for (std::size_t u = 0; u < used.size(); ++u) {
		if (used[u] == new_class) {
			fresh_slot = u;
		} else {
			hist.push_back(u);
		}
	}
	std::vector<double> weights(used.size(), 0.0);
	Contribution value;
	double variance = 0;
	if (!hist.empty()) {
		std::vector<double> hn;
		std::vector<double> hd;
		std::vector<double> hv;
		for (auto u : hist) {
			hn.push_back(num[u]);
			hd.push_back(den[u]);
			hv.push_back(v2[u]);
		}
		const auto inner = combine_classes(hn, hd, hv);
		if (inner.fallback) {
			out.flags.push_back("degenerate class variances; equal weights");
		}
		double correlated = 0;
		double independent = 0;
		for (std::size_t h = 0; h < hist.size(); ++h) {
			const auto &report = out.classes[used[hist[h]]];
			const double w = inner.weights[h];
			weights[hist[h]] = w;
			correlated += w * std::sqrt(report.beta);
			independent += w * w * report.alpha / static_cast<double>(report.updates);
		}
		value = {inner.num, inner.den};
		variance = correlated * correlated + independent;
	}
	if (fresh_slot) {
		const auto u = *fresh_slot;
		if (hist.empty()) {
			weights[u] = 1.0;
			value = {num[u], den[u]};
			variance = v2[u];
		} else {
			const auto outer = combine_classes({value.num, num[u]}, {value.den, den[u]}, {variance, v2[u]});
			for (auto h : hist) {
				weights[h] *= outer.weights[0];
			}
			weights[u] = outer.weights[1];
			value = {outer.num, outer.den};
			variance = outer.weights[0] * outer.weights[0] * variance + outer.weights[1] * outer.weights[1] * v2[u];
		}
	}
	for (std::size_t u = 0; u < used.size(); ++u) {
		out.classes[used[u]].weight = weights[u];
	}
	if (track_delta) {
		out.value = combine_classes(dnum, dnum, dv2).num;
	}
	BaseState s;
	s.value = value;
	s.variance = variance;
	return s;
}

std::unique_ptr<Estimator> make_estimator(EstimatorKind kind, QueryTree tree, AggregateSpec spec,
                                          EstimatorOptions options) {
	switch (kind) {
	case EstimatorKind::restart:
		return std::make_unique<RestartEstimator>(std::move(tree), std::move(spec), options);
	case EstimatorKind::reissue:
		return std::make_unique<ReissueEstimator>(std::move(tree), std::move(spec), options);
	case EstimatorKind::rs:
		return std::make_unique<RsEstimator>(std::move(tree), std::move(spec), options);
	}
	throw std::invalid_argument("unknown estimator kind");
}

double replay_estimate(const QueryTree &tree, const std::vector<DrillDownRecord> &records, const AggregateSpec &spec,
                       int round) {
	validate(spec, tree.schema());
	double num = 0;
	double den = 0;
	std::size_t n = 0;
	for (const auto &rec : records) {
		for (const auto &e : rec.history) {
			if (e.round != round) {
				continue;
			}
			const auto c = drill_contribution(spec, tree, e.terminal, e.outcome);
			num += c.num;
			den += c.den;
			++n;
		}
	}
	if (n == 0) {
		throw NoEstimateError("no drill-down recorded for round " + std::to_string(round));
	}
	if (spec.agg == AggFn::avg) {
		if (den == 0) {
			throw UndefinedAggregate("AVG replay: estimated COUNT is zero");
		}
		return num / den;
	}
	return num / static_cast<double>(n);
}

} // namespace hidden_agg
