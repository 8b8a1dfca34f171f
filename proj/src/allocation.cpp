#include "hidden_agg/allocation.hpp"

#include "hidden_agg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hidden_agg {

WeightChoice optimal_w1(double sigma2_c, double sigma2_1, double sigma2_d, double h, double h1, double h2) {
	const double chain = sigma2_c / h1 + sigma2_1 / h;
	const double fresh = sigma2_d / h2;
	const double denom = chain + fresh;
	if (!(denom > 0)) {
		return {0.5, true};
	}
	return {fresh / denom, false};
}

double combined_variance(double w1, double sigma2_c, double sigma2_1, double sigma2_d, double h, double h1,
                         double h2) {
	return w1 * w1 * (sigma2_c / h1 + sigma2_1 / h) + (1 - w1) * (1 - w1) * sigma2_d / h2;
}

SplitChoice optimal_h1(double budget, double g_c, double g_d, double h, double sigma2_c, double sigma2_1,
                       double sigma2_d) {
	if (sigma2_c <= 0) {
		return {0, false};
	}
	double bound = std::min(budget / g_c, h);
	if (sigma2_1 <= 0) {
		return {static_cast<std::size_t>(std::floor(std::max(0.0, bound))), true};
	}
	// same operation order as the mixed regime of optimal_allocation, with beta = s2_1/h
	const double interior = (std::sqrt(sigma2_c * sigma2_d * g_d / g_c) - sigma2_c) / (sigma2_1 / h);
	const double h1 = std::max(0.0, std::min(bound, interior));
	return {static_cast<std::size_t>(std::floor(h1)), false};
}

double AllocationPlan::planned_cost(const VarianceProfile &profile) const {
	double total = 0;
	for (std::size_t i = 0; i < counts.size(); ++i) {
		total += static_cast<double>(counts[i]) * profile.classes[i].cost;
	}
	return total;
}

namespace {

double cap_of(const ClassProfile &c) {
	return c.available ? static_cast<double>(*c.available) : std::numeric_limits<double>::infinity();
}

std::size_t to_count(double c) {
	if (!(c > 0)) {
		return 0;
	}
	return static_cast<std::size_t>(std::floor(c));
}

// Fills `order` greedily: each class takes as much of the remaining budget as its cap allows.
void greedy_fill(double budget, const VarianceProfile &profile, const std::vector<std::size_t> &order,
                 AllocationPlan &plan) {
	double left = budget;
	for (auto i : order) {
		const auto &c = profile.classes[i];
		if (left <= 0) {
			break;
		}
		const double want = std::min(left / c.cost, cap_of(c));
		plan.unrounded[i] = left / c.cost;
		plan.counts[i] = to_count(want);
		left -= static_cast<double>(plan.counts[i]) * c.cost;
	}
}

std::vector<std::size_t> by_alpha_cost(const VarianceProfile &profile, bool zero_beta_only) {
	std::vector<std::size_t> order;
	for (std::size_t i = 0; i < profile.classes.size(); ++i) {
		if (!zero_beta_only || profile.classes[i].beta == 0) {
			order.push_back(i);
		}
	}
	std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
		return profile.classes[a].alpha * profile.classes[a].cost < profile.classes[b].alpha * profile.classes[b].cost;
	});
	return order;
}

} // namespace

AllocationPlan optimal_allocation(double budget, const VarianceProfile &profile) {
	const auto &classes = profile.classes;
	AllocationPlan plan;
	plan.counts.assign(classes.size(), 0);
	plan.unrounded.assign(classes.size(), 0.0);
	if (classes.empty() || budget <= 0) {
		return plan;
	}
	for (const auto &c : classes) {
		if (!(c.cost > 0) || c.alpha < 0 || c.beta < 0) {
			throw std::invalid_argument("class profile needs cost > 0 and non-negative alpha, beta");
		}
	}

	const bool all_zero_alpha = std::all_of(classes.begin(), classes.end(), [](auto &c) { return c.alpha == 0; });
	const bool all_zero_beta = std::all_of(classes.begin(), classes.end(), [](auto &c) { return c.beta == 0; });
	const bool all_positive_beta = std::all_of(classes.begin(), classes.end(), [](auto &c) { return c.beta > 0; });

	if (all_zero_alpha && all_zero_beta) {
		plan.regime = AllocationRegime::degenerate;
		plan.flags.push_back("degenerate: every alpha and beta is zero");
		std::size_t target = classes.size() - 1;
		for (std::size_t i = 0; i < classes.size(); ++i) {
			if (!classes[i].available) {
				target = i;
			}
		}
		greedy_fill(budget, profile, {target}, plan);
		return plan;
	}

	if (all_zero_beta) {
		plan.regime = AllocationRegime::all_zero_beta;
		greedy_fill(budget, profile, by_alpha_cost(profile, false), plan);
		return plan;
	}

	if (all_positive_beta) {
		plan.regime = AllocationRegime::all_positive_beta;
		// stationarity: alpha_x / (alpha_x + beta_x c_x)^2 = lambda g_x
		std::vector<bool> active(classes.size(), true);
		std::vector<double> c(classes.size(), 0.0);
		for (std::size_t i = 0; i < classes.size(); ++i) {
			active[i] = classes[i].alpha > 0;
		}
		for (;;) {
			double s1 = 0;
			double s2 = 0;
			for (std::size_t i = 0; i < classes.size(); ++i) {
				if (active[i]) {
					s1 += std::sqrt(classes[i].alpha * classes[i].cost) / classes[i].beta;
					s2 += classes[i].cost * classes[i].alpha / classes[i].beta;
				}
			}
			if (s1 == 0) {
				plan.flags.push_back("no class has variance left to reduce");
				break;
			}
			const double scale = (budget + s2) / s1;
			bool dropped = false;
			for (std::size_t i = 0; i < classes.size(); ++i) {
				if (!active[i]) {
					c[i] = 0;
					continue;
				}
				c[i] = (std::sqrt(classes[i].alpha / classes[i].cost) * scale - classes[i].alpha) / classes[i].beta;
			}
			for (std::size_t i = 0; i < classes.size(); ++i) {
				if (active[i] && c[i] < 0) {
					active[i] = false;
					dropped = true;
				}
			}
			if (!dropped) {
				break;
			}
		}
		for (std::size_t i = 0; i < classes.size(); ++i) {
			plan.unrounded[i] = c[i];
			plan.counts[i] = to_count(std::min({c[i], budget / classes[i].cost, cap_of(classes[i])}));
		}
		return plan;
	}

	plan.regime = AllocationRegime::mixed;
	const auto zero_beta = by_alpha_cost(profile, true);
	const std::size_t y = zero_beta.front();
	const auto &cy = classes[y];
	double spent = 0;
	for (std::size_t i = 0; i < classes.size(); ++i) {
		const auto &cx = classes[i];
		if (cx.beta == 0) {
			continue;
		}
		const double interior = (std::sqrt(cx.alpha * cy.alpha * cy.cost / cx.cost) - cx.alpha) / cx.beta;
		const double want = std::max(0.0, std::min(budget / cx.cost, interior));
		plan.unrounded[i] = want;
		plan.counts[i] = to_count(std::min(want, cap_of(cx)));
		spent += static_cast<double>(plan.counts[i]) * cx.cost;
	}
	if (spent > budget) {
		// each class fits alone but not together; shrink them proportionally
		const double shrink = budget / spent;
		spent = 0;
		for (std::size_t i = 0; i < classes.size(); ++i) {
			if (classes[i].beta > 0) {
				plan.counts[i] = to_count(static_cast<double>(plan.counts[i]) * shrink);
				spent += static_cast<double>(plan.counts[i]) * classes[i].cost;
			}
		}
		plan.flags.push_back("updates scaled to fit the budget");
	}
	greedy_fill(budget - spent, profile, zero_beta, plan);
	return plan;
}

Combination multiround_combine(std::span<const double> means, std::span<const double> variances) {
	if (means.size() != variances.size() || means.empty()) {
		throw std::invalid_argument("multiround_combine needs one variance per class mean");
	}
	Combination out;
	out.weights.assign(means.size(), 0.0);
	std::vector<std::size_t> exact;
	double inv_total = 0;
	for (std::size_t i = 0; i < means.size(); ++i) {
		if (variances[i] < 0 || std::isnan(variances[i])) {
			throw std::invalid_argument("class variance must be non-negative");
		}
		if (variances[i] == 0) {
			exact.push_back(i);
		} else if (std::isfinite(variances[i])) {
			inv_total += 1.0 / variances[i];
		}
	}
	if (!exact.empty()) {
		const double first = means[exact.front()];
		for (auto i : exact) {
			const double tol = 1e-12 * std::max(1.0, std::abs(first));
			if (std::abs(means[i] - first) > tol) {
				throw InconsistencyError("zero-variance classes disagree on the estimate");
			}
		}
		for (auto i : exact) {
			out.weights[i] = 1.0 / static_cast<double>(exact.size());
			out.value += out.weights[i] * means[i];
		}
		out.variance = 0;
		return out;
	}
	if (!(inv_total > 0)) {
		throw std::invalid_argument("no class has a finite positive variance");
	}
	for (std::size_t i = 0; i < means.size(); ++i) {
		if (std::isfinite(variances[i])) {
			out.weights[i] = (1.0 / variances[i]) / inv_total;
			out.value += out.weights[i] * means[i];
		}
	}
	out.variance = 1.0 / inv_total;
	return out;
}

double reissue_error_bound(double n, double n_d, double k, double max_domain_size) {
	if (!(n > k) || k < 1) {
		throw std::domain_error("reissue bound needs n > k >= 1");
	}
	if (n_d < 0 || n_d > n) {
		throw std::domain_error("reissue bound needs 0 <= n_d <= n");
	}
	if (!(max_domain_size >= 2)) {
		throw std::domain_error("reissue bound needs domains of size >= 2");
	}
	const double frac = n_d / n;
	const double inner = 2.0 * std::log(max_domain_size) / (std::log(n) - std::log(k)) + std::pow(frac, k + 1);
	return (1.0 - frac) * std::sqrt(inner);
}

} // namespace hidden_agg
