#pragma once

#include <stdexcept>
#include <string>

namespace hidden_agg {

class Error : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

//! Unknown attribute or value, malformed domain, contradictory condition.
class SchemaError : public Error {
public:
	using Error::Error;
};

//! A search was attempted on a ledger with no remaining queries.
class BudgetExceeded : public Error {
public:
	using Error::Error;
};

//! The insertion source ran dry or a deletion was infeasible.
class ScheduleError : public Error {
public:
	using Error::Error;
};

//! Missing prior round information needed by an estimator.
class StateError : public Error {
public:
	using Error::Error;
};

//! AVG over an empty selection, or a variance over fewer than two values.
class UndefinedAggregate : public Error {
public:
	using Error::Error;
};

//! A round completed without any drill-down.
class NoEstimateError : public Error {
public:
	using Error::Error;
};

//! Dataset or config parse failure; carries the offending line when known.
class ParseError : public Error {
public:
	using Error::Error;
};

//! Requested generation cannot be satisfied (e.g. more distinct tuples than leaves).
class InfeasibleError : public Error {
public:
	using Error::Error;
};

//! Two zero-variance classes disagree on the estimate.
class InconsistencyError : public Error {
public:
	using Error::Error;
};

} // namespace hidden_agg
