#pragma once

#include "hidden_agg/aggregate.hpp"
#include "hidden_agg/estimators.hpp"
#include "hidden_agg/simulator.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hidden_agg {

struct DatasetConfig {
	//! "boolean" or "csv"
	std::string type = "boolean";
	std::size_t m = 30;
	std::string path;
};

struct SimulatorConfig {
	//! initial tuples; for a CSV source, the size of the initial subset
	std::size_t n0 = 5000;
	std::size_t inserts_per_round = 50;
	double delete_fraction = 0.005;
	UpdateMode mode = UpdateMode::round;
	std::size_t k = 10;
	std::size_t G = 100;
	std::uint64_t seed = 1;
	//! "random" or "value_ordered"
	std::string score = "random";
};

//! Aggregate as written in a config, by attribute and value names.
struct AggregateConfig {
	std::string id = "count";
	AggFn agg = AggFn::count;
	std::string measure;
	std::vector<std::pair<std::string, std::string>> selection;
	AggregateKind kind = AggregateKind::single_round;
	std::size_t window = 1;
	//! drill down in the subtree pinned by the selection instead of the full tree
	bool subtree = false;
};

struct ExperimentConfig {
	DatasetConfig dataset;
	SimulatorConfig simulator;
	std::size_t rounds = 50;
	std::size_t trials = 1;
	std::vector<EstimatorKind> estimators{EstimatorKind::restart, EstimatorKind::reissue, EstimatorKind::rs};
	std::vector<AggregateConfig> aggregates{AggregateConfig{}};
	std::size_t varpi = 10;
	ReissuePolicy policy = ReissuePolicy::verify_parent;
	//! base seed of the estimators' streams
	std::uint64_t seed = 1;
	//! 0 picks the hardware concurrency
	std::size_t threads = 0;
};

//! Applies the JSON document on top of `base`; keys absent from the document keep
//! their base values. Throws ParseError on syntax errors, unknown keys, or bad values.
ExperimentConfig parse_config(const std::string &json_text, ExperimentConfig base = {});
std::string config_to_json(const ExperimentConfig &config);

//! Throws ParseError when a field is out of range.
void validate(const ExperimentConfig &config);

//! Resolves names against the schema.
AggregateSpec resolve(const AggregateConfig &aggregate, const Schema &schema);

struct MetricsRow {
	std::size_t trial = 0;
	int round = 0;
	std::string estimator;
	std::string aggregate;
	std::optional<double> estimate;
	std::optional<double> truth;
	std::optional<double> rel_error;
	std::size_t queries = 0;
	std::size_t cum_queries = 0;
};

struct RunStats {
	//! largest number of searches any estimator issued in one round
	std::size_t max_round_queries = 0;
	std::size_t failed_rounds = 0;
};

//! Runs every trial and returns rows ordered by trial, round, estimator, aggregate.
//! The output depends only on the config.
std::vector<MetricsRow> run_experiment(const ExperimentConfig &config, RunStats *stats = nullptr);

extern const char *const metrics_header;

void write_metrics_csv(std::ostream &out, const std::vector<MetricsRow> &rows);
//! Throws ParseError with a line number on malformed input.
std::vector<MetricsRow> read_metrics_csv(std::istream &in);

struct SummaryRow {
	int round = 0;
	std::string estimator;
	std::string aggregate;
	std::size_t trials = 0;
	double mean_estimate = 0;
	double mean_truth = 0;
	double bias = 0;
	//! Bessel-corrected; empty with a single trial
	std::optional<double> variance;
	std::optional<double> std_error;
	double mse = 0;
	std::optional<double> mean_rel_error;
	double min_estimate = 0;
	double max_estimate = 0;
	std::size_t undefined = 0;
};

//! Per (round, estimator, aggregate) statistics over trials with a defined estimate,
//! sorted by round, estimator, aggregate.
std::vector<SummaryRow> summarize(const std::vector<MetricsRow> &rows);

void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows);

std::string format_double(double v);

} // namespace hidden_agg
