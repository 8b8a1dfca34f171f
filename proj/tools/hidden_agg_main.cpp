// hidden-agg: generate datasets, run tracking experiments, summarize metrics, and
// evaluate the reissue error bound.

#include "hidden_agg/allocation.hpp"
#include "hidden_agg/dataset.hpp"
#include "hidden_agg/errors.hpp"
#include "hidden_agg/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace hidden_agg;

namespace {

std::string read_file(const std::string &path) {
	std::ifstream in(path);
	if (!in) {
		throw ParseError("cannot open '" + path + "'");
	}
	std::ostringstream buf;
	buf << in.rdbuf();
	return buf.str();
}

std::vector<EstimatorKind> parse_estimators(const std::string &list) {
	std::vector<EstimatorKind> out;
	std::stringstream ss(list);
	std::string item;
	while (std::getline(ss, item, ',')) {
		if (!item.empty()) {
			out.push_back(parse_estimator_kind(item));
		}
	}
	return out;
}

} // namespace

int main(int argc, char **argv) {
	CLI::App app{"Aggregate estimation over a dynamic hidden database behind a top-k interface"};
	app.require_subcommand(1);

	// generate
	auto *gen = app.add_subcommand("generate", "Write a Boolean dataset as CSV");
	std::size_t gen_n = 5000;
	std::size_t gen_m = 30;
	std::uint64_t gen_seed = 1;
	std::size_t gen_pool = 0;
	std::string gen_out;
	std::string gen_reserve_out;
	gen->add_option("--n", gen_n, "Initial tuples")->capture_default_str();
	gen->add_option("--m", gen_m, "Boolean attributes")->capture_default_str();
	gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
	gen->add_option("--pool", gen_pool, "Reserve tuples for insertions")->capture_default_str();
	gen->add_option("--out", gen_out, "Output CSV")->required();
	gen->add_option("--reserve-out", gen_reserve_out, "Output CSV for the reserve pool");

	// run
	auto *run = app.add_subcommand("run", "Run an experiment and write per-round metrics");
	ExperimentConfig cfg;
	std::string config_path;
	std::string run_out;
	std::string sidecar;
	std::string estimators_flag;
	std::string mode_flag;
	run->add_option("--config", config_path, "Experiment JSON; its values override flags");
	run->add_option("--out", run_out, "Metrics CSV")->required();
	run->add_option("--sidecar", sidecar, "Resolved config JSON (default: <out>.json)");
	run->add_option("--csv", cfg.dataset.path, "Categorical dataset instead of Boolean synthetic data");
	run->add_option("--m", cfg.dataset.m, "Boolean attributes")->capture_default_str();
	run->add_option("--n0", cfg.simulator.n0, "Initial tuples")->capture_default_str();
	run->add_option("--k", cfg.simulator.k, "Top-k")->capture_default_str();
	run->add_option("--G", cfg.simulator.G, "Queries per round")->capture_default_str();
	run->add_option("--inserts", cfg.simulator.inserts_per_round, "Inserts per round")->capture_default_str();
	run->add_option("--delete-fraction", cfg.simulator.delete_fraction, "Deleted fraction per round")
	    ->capture_default_str();
	run->add_option("--mode", mode_flag, "round or constant");
	run->add_option("--sim-seed", cfg.simulator.seed, "Database and schedule seed")->capture_default_str();
	run->add_option("--seed", cfg.seed, "Estimator seed")->capture_default_str();
	run->add_option("--rounds", cfg.rounds, "Rounds")->capture_default_str();
	run->add_option("--trials", cfg.trials, "Trials")->capture_default_str();
	run->add_option("--varpi", cfg.varpi, "Bootstrap drill-downs per class")->capture_default_str();
	run->add_option("--threads", cfg.threads, "Worker threads (0: all cores)")->capture_default_str();
	run->add_option("--estimators", estimators_flag, "Comma-separated: restart,reissue,rs");

	// summarize
	auto *sum = app.add_subcommand("summarize", "Per-round statistics from a metrics CSV");
	std::string sum_in;
	std::string sum_out;
	sum->add_option("--in", sum_in, "Metrics CSV")->required();
	sum->add_option("--out", sum_out, "Summary CSV (default: stdout)");

	// bound
	auto *bound = app.add_subcommand("bound", "Evaluate the reissue-to-restart standard error bound");
	double b_n = 0;
	double b_nd = 0;
	double b_k = 10;
	double b_domain = 2;
	bound->add_option("--n", b_n, "Tuples before deletion")->required();
	bound->add_option("--nd", b_nd, "Deleted tuples")->capture_default_str();
	bound->add_option("--k", b_k, "Top-k")->capture_default_str();
	bound->add_option("--max-domain", b_domain, "Largest attribute domain size")->capture_default_str();

	CLI11_PARSE(app, argc, argv);

	try {
		if (gen->parsed()) {
			auto data = generate_boolean_db(gen_n, gen_m, gen_seed, gen_pool);
			write_csv_table(gen_out, data.schema, data.initial);
			if (!gen_reserve_out.empty()) {
				write_csv_table(gen_reserve_out, data.schema, data.reserve);
			}
			std::cerr << "wrote " << data.initial.size() << " tuples to " << gen_out << '\n';
		} else if (run->parsed()) {
			if (!cfg.dataset.path.empty()) {
				cfg.dataset.type = "csv";
			}
			if (!mode_flag.empty()) {
				cfg.simulator.mode = parse_config(R"({"simulator":{"mode":")" + mode_flag + "\"}}", cfg).simulator.mode;
			}
			if (!estimators_flag.empty()) {
				cfg.estimators = parse_estimators(estimators_flag);
			}
			if (!config_path.empty()) {
				cfg = parse_config(read_file(config_path), cfg);
			}
			validate(cfg);
			RunStats stats;
			const auto rows = run_experiment(cfg, &stats);
			std::ofstream out(run_out, std::ios::binary);
			if (!out) {
				throw ParseError("cannot write '" + run_out + "'");
			}
			write_metrics_csv(out, rows);
			std::ofstream side(sidecar.empty() ? run_out + ".json" : sidecar);
			side << config_to_json(cfg) << '\n';
			std::cerr << "wrote " << rows.size() << " rows to " << run_out << " (" << stats.failed_rounds
			          << " rounds without an estimate)\n";
		} else if (sum->parsed()) {
			std::ifstream in(sum_in);
			if (!in) {
				throw ParseError("cannot open '" + sum_in + "'");
			}
			const auto summary = summarize(read_metrics_csv(in));
			if (sum_out.empty()) {
				write_summary_csv(std::cout, summary);
			} else {
				std::ofstream out(sum_out);
				write_summary_csv(out, summary);
			}
		} else if (bound->parsed()) {
			std::cout << format_double(reissue_error_bound(b_n, b_nd, b_k, b_domain)) << '\n';
		}
	} catch (const std::exception &e) {
		std::cerr << "hidden-agg: error: " << e.what() << '\n';
		return 2;
	}
	return 0;
}
