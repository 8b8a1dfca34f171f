#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hidden_agg {

// Two-round weighting and budget split --------------------------------------

struct WeightChoice {
	double w1 = 0.5;
	//! all three variance terms were zero; w1 fell back to 1/2
	bool degenerate = false;
};

//! Weight on the updated chain (first-round estimate plus mean delta) that minimizes
//! combined_variance: w1 = (s2_d/h2) / (s2_c/h1 + s2_1/h + s2_d/h2).
WeightChoice optimal_w1(double sigma2_c, double sigma2_1, double sigma2_d, double h, double h1, double h2);

//! w1^2 (s2_c/h1 + s2_1/h) + (1 - w1)^2 s2_d/h2
double combined_variance(double w1, double sigma2_c, double sigma2_1, double sigma2_d, double h, double h1,
                         double h2);

struct SplitChoice {
	std::size_t h1 = 0;
	//! s2_1 was zero while s2_c was not; the unbounded term was dropped
	bool clamped = false;
};

//! Number of previous drill-downs to update in round two:
//! max(0, min(G/g_c, h, h (sqrt(g_d s2_d s2_c / g_c) - s2_c) / s2_1)), rounded down.
SplitChoice optimal_h1(double budget, double g_c, double g_d, double h, double sigma2_c, double sigma2_1,
                       double sigma2_d);

// Multi-round allocation -----------------------------------------------------

//! Per-class inputs of the allocation. A class groups drill-downs last updated in the
//! same round; the class of brand-new drill-downs has no `available` limit and beta 0.
struct ClassProfile {
	int round = 0;
	//! limit of c * (v^2(c) - beta)
	double alpha = 0;
	//! limit of v^2(c) as c grows
	double beta = 0;
	//! mean queries per update
	double cost = 1;
	std::size_t samples = 0;
	std::optional<std::size_t> available;
	//! variance borrowed from other classes for lack of samples
	bool pooled = false;
};

struct VarianceProfile {
	std::vector<ClassProfile> classes;
};

enum class AllocationRegime { all_positive_beta, all_zero_beta, mixed, degenerate };

struct AllocationPlan {
	//! c_x per class, in profile order
	std::vector<std::size_t> counts;
	//! before rounding and availability caps
	std::vector<double> unrounded;
	AllocationRegime regime = AllocationRegime::degenerate;
	std::vector<std::string> flags;

	double planned_cost(const VarianceProfile &profile) const;
};

//! Splits `budget` queries across classes to minimize 1 / sum_x 1/(alpha_x/c_x + beta_x)
//! subject to sum_x cost_x c_x <= budget.
//!
//! * every beta > 0: interior optimum of the Lagrangian, with classes whose optimum
//!   is negative removed and the rest re-solved;
//! * every beta = 0: the whole budget to the class minimizing alpha*cost (lowest
//!   index on ties), spilling to the next one only when `available` caps it;
//! * mixed: y = argmin alpha*cost among beta = 0 classes; each beta > 0 class gets
//!   max(0, min(B/g_x, (sqrt(alpha_x alpha_y g_y / g_x) - alpha_x) / beta_x)) and y
//!   takes what is left;
//! * all alpha and beta zero: everything to the new-drill-down class, flagged.
AllocationPlan optimal_allocation(double budget, const VarianceProfile &profile);

// Combination ----------------------------------------------------------------

struct Combination {
	double value = 0;
	std::vector<double> weights;
	//! 1 / sum 1/v^2, zero when some class is exact
	double variance = 0;
};

//! Inverse-variance weighting of per-class means. A zero-variance class takes all the
//! weight; several zero-variance classes share it equally when their means agree and
//! raise InconsistencyError otherwise.
Combination multiround_combine(std::span<const double> means, std::span<const double> variances);

// Reissue vs restart ---------------------------------------------------------

//! Upper bound on s_I / s_S after deleting n_d of n tuples:
//! (1 - n_d/n) sqrt(2 log(max |U_i|) / (log n - log k) + (n_d/n)^(k+1)).
//! The log base cancels. Throws std::domain_error unless n > k and 0 <= n_d <= n.
double reissue_error_bound(double n, double n_d, double k, double max_domain_size);

} // namespace hidden_agg
