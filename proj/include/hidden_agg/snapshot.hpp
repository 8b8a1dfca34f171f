#pragma once

#include "hidden_agg/estimators.hpp"

#include <string>
#include <vector>

namespace hidden_agg {

//! Serializable drill-down history of one estimator, enough to answer an ad hoc
//! aggregate for any past round with replay_estimate().
struct Snapshot {
	std::string estimator;
	std::vector<Predicate> condition;
	std::vector<DrillDownRecord> records;
};

Snapshot take_snapshot(const Estimator &estimator);

//! JSON text. Values are stored by name so the file is readable on its own.
std::string snapshot_to_json(const Snapshot &snapshot, const Schema &schema);

//! Throws ParseError on malformed input or names the schema does not know.
Snapshot snapshot_from_json(const std::string &text, const Schema &schema);

} // namespace hidden_agg
