#include "hidden_agg/dataset.hpp"

#include "hidden_agg/errors.hpp"
#include "hidden_agg/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

namespace hidden_agg {

Dataset generate_boolean_db(std::size_t n, std::size_t m, std::uint64_t seed, std::size_t pool) {
	Dataset data{Schema::boolean(m), {}, {}};
	const std::size_t total = n + pool;
	const double capacity = std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(m, 1000)));
	if (static_cast<double>(total) > capacity) {
		throw InfeasibleError(std::to_string(total) + " distinct tuples requested but m=" + std::to_string(m) +
		                      " Boolean attributes allow only 2^" + std::to_string(m));
	}
	Rng rng(mix_seed(seed, 0xb001));
	std::vector<std::vector<Value>> rows;
	rows.reserve(total);
	if (m <= 62) {
		// sampling codes without replacement is i.i.d. sampling conditioned on distinctness
		for (auto code : sample_without_replacement(rng, std::size_t{1} << m, total)) {
			std::vector<Value> row(m);
			for (std::size_t i = 0; i < m; ++i) {
				row[i] = static_cast<Value>((code >> (m - 1 - i)) & 1U);
			}
			rows.push_back(std::move(row));
		}
	} else {
		std::set<std::vector<Value>> seen;
		while (rows.size() < total) {
			std::vector<Value> row(m);
			for (auto &v : row) {
				v = static_cast<Value>(rng() >> 63);
			}
			if (seen.insert(row).second) {
				rows.push_back(std::move(row));
			}
		}
	}
	data.initial.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n));
	data.reserve.assign(rows.begin() + static_cast<std::ptrdiff_t>(n), rows.end());
	return data;
}

namespace {

// One CSV record; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_record(const std::string &line, std::size_t line_no) {
	std::vector<std::string> fields;
	std::string field;
	bool quoted = false;
	for (std::size_t i = 0; i < line.size(); ++i) {
		const char c = line[i];
		if (quoted) {
			if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
				field += '"';
				++i;
			} else if (c == '"') {
				quoted = false;
			} else {
				field += c;
			}
		} else if (c == '"') {
			quoted = true;
		} else if (c == ',') {
			fields.push_back(std::move(field));
			field.clear();
		} else {
			field += c;
		}
	}
	if (quoted) {
		throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
	}
	fields.push_back(std::move(field));
	return fields;
}

std::optional<double> as_number(const std::string &s) {
	double v = 0;
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
	if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
		return std::nullopt;
	}
	return v;
}

std::string quote_if_needed(const std::string &s) {
	if (s.find_first_of(",\"\n") == std::string::npos) {
		return s;
	}
	std::string out = "\"";
	for (char c : s) {
		out += c;
		if (c == '"') {
			out += '"';
		}
	}
	return out + "\"";
}

struct RowHash {
	std::size_t operator()(const std::vector<Value> &v) const noexcept {
		std::size_t h = 1469598103934665603ULL;
		for (auto x : v) {
			h = (h ^ x) * 1099511628211ULL;
		}
		return h;
	}
};

} // namespace

CsvTable read_csv_table(const std::string &path) {
	std::ifstream in(path);
	if (!in) {
		throw ParseError("cannot open '" + path + "'");
	}
	std::string line;
	std::size_t line_no = 0;
	std::vector<std::string> header;
	std::vector<std::vector<std::string>> raw;
	std::vector<std::size_t> raw_lines;
	while (std::getline(in, line)) {
		++line_no;
		if (!line.empty() && line.back() == '\r') {
			line.pop_back();
		}
		if (line.empty()) {
			continue;
		}
		auto fields = split_record(line, line_no);
		if (header.empty()) {
			header = std::move(fields);
			continue;
		}
		if (fields.size() != header.size()) {
			throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
			                 " fields, found " + std::to_string(fields.size()));
		}
		raw.push_back(std::move(fields));
		raw_lines.push_back(line_no);
	}
	if (header.empty()) {
		throw ParseError(path + ": missing header row");
	}

	std::vector<Attribute> attrs(header.size());
	for (std::size_t c = 0; c < header.size(); ++c) {
		std::set<std::string> seen;
		for (const auto &row : raw) {
			seen.insert(row[c]);
		}
		std::vector<std::string> domain(seen.begin(), seen.end());
		const bool numeric = std::all_of(domain.begin(), domain.end(), [](auto &s) { return as_number(s).has_value(); });
		if (numeric) {
			std::stable_sort(domain.begin(), domain.end(),
			                 [](auto &a, auto &b) { return *as_number(a) < *as_number(b); });
		}
		if (domain.size() < 2) {
			throw ParseError(path + ": column '" + header[c] + "' has " + std::to_string(domain.size()) +
			                 " distinct value(s); at least 2 are needed");
		}
		attrs[c] = {header[c], std::move(domain)};
	}

	CsvTable table;
	try {
		table.schema = Schema(std::move(attrs));
	} catch (const SchemaError &e) {
		throw ParseError(path + ": " + e.what());
	}
	std::unordered_map<std::vector<Value>, std::size_t, RowHash> first_line;
	for (std::size_t r = 0; r < raw.size(); ++r) {
		std::vector<Value> row(header.size());
		for (std::size_t c = 0; c < header.size(); ++c) {
			row[c] = table.schema.value_code(c, raw[r][c]);
		}
		auto [it, fresh] = first_line.emplace(row, raw_lines[r]);
		if (!fresh) {
			throw ParseError(path + ": duplicate rows at lines " + std::to_string(it->second) + " and " +
			                 std::to_string(raw_lines[r]));
		}
		table.rows.push_back(std::move(row));
	}
	return table;
}

Dataset split_table(const CsvTable &table, InitialSize initial, std::uint64_t seed) {
	std::size_t count = table.rows.size();
	if (initial.count) {
		count = *initial.count;
	} else if (initial.fraction) {
		if (*initial.fraction < 0 || *initial.fraction > 1) {
			throw std::invalid_argument("initial fraction must lie in [0, 1]");
		}
		count = static_cast<std::size_t>(std::floor(*initial.fraction * static_cast<double>(table.rows.size())));
	}
	if (count > table.rows.size()) {
		throw std::invalid_argument("initial count " + std::to_string(count) + " exceeds the " +
		                            std::to_string(table.rows.size()) + " rows available");
	}
	Rng rng(mix_seed(seed, 0xc5f));
	auto chosen = sample_without_replacement(rng, table.rows.size(), count);
	std::vector<bool> in_initial(table.rows.size(), false);
	Dataset data{table.schema, {}, {}};
	for (auto i : chosen) {
		in_initial[i] = true;
		data.initial.push_back(table.rows[i]);
	}
	for (std::size_t i = 0; i < table.rows.size(); ++i) {
		if (!in_initial[i]) {
			data.reserve.push_back(table.rows[i]);
		}
	}
	return data;
}

Dataset load_csv_db(const std::string &path, InitialSize initial, std::uint64_t seed) {
	return split_table(read_csv_table(path), initial, seed);
}

void write_csv_table(const std::string &path, const Schema &schema, const std::vector<std::vector<Value>> &rows) {
	std::ofstream out(path);
	if (!out) {
		throw ParseError("cannot write '" + path + "'");
	}
	for (std::size_t c = 0; c < schema.size(); ++c) {
		out << (c ? "," : "") << quote_if_needed(schema.attribute(c).name);
	}
	out << '\n';
	for (const auto &row : rows) {
		for (std::size_t c = 0; c < row.size(); ++c) {
			out << (c ? "," : "") << quote_if_needed(schema.value_name(c, row[c]));
		}
		out << '\n';
	}
}

} // namespace hidden_agg
