#pragma once

#include "hidden_agg/schema.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hidden_agg {

//! Initial tuples plus a disjoint reserve used for insertions.
struct Dataset {
	Schema schema;
	std::vector<std::vector<Value>> initial;
	std::vector<std::vector<Value>> reserve;
};

//! n + pool distinct tuples with i.i.d. uniform Boolean attributes A1..Am.
//! Throws InfeasibleError when n + pool > 2^m.
Dataset generate_boolean_db(std::size_t n, std::size_t m, std::uint64_t seed, std::size_t pool = 0);

//! A categorical table: header row of attribute names, one tuple per line.
struct CsvTable {
	Schema schema;
	std::vector<std::vector<Value>> rows;
};

//! Domains are the observed values per column, numerically ordered when every value
//! parses as a number and lexicographically otherwise. Throws ParseError on ragged
//! rows (with the line number), duplicate rows (with both row numbers), or a column
//! holding a single value.
CsvTable read_csv_table(const std::string &path);

struct InitialSize {
	std::optional<std::size_t> count;
	std::optional<double> fraction;
};

//! Picks the initial subset uniformly without replacement; the rest, in file order,
//! becomes the reserve. Throws std::invalid_argument if the count exceeds the rows.
Dataset split_table(const CsvTable &table, InitialSize initial, std::uint64_t seed);

Dataset load_csv_db(const std::string &path, InitialSize initial, std::uint64_t seed);

void write_csv_table(const std::string &path, const Schema &schema, const std::vector<std::vector<Value>> &rows);

} // namespace hidden_agg
