#include "hidden_agg/snapshot.hpp"

#include "hidden_agg/errors.hpp"

#include <json.hpp>

namespace hidden_agg {

using nlohmann::json;

Snapshot take_snapshot(const Estimator &estimator) {
	return {to_string(estimator.kind()), estimator.tree().condition(), estimator.records()};
}

namespace {

json values_json(const Schema &schema, std::span<const Value> values) {
	json out = json::array();
	for (std::size_t i = 0; i < values.size(); ++i) {
		out.push_back(schema.value_name(i, values[i]));
	}
	return out;
}

std::vector<Value> values_from(const Schema &schema, const json &j) {
	if (!j.is_array() || j.size() != schema.size()) {
		throw ParseError("tuple does not have one value per attribute");
	}
	std::vector<Value> out;
	for (std::size_t i = 0; i < j.size(); ++i) {
		out.push_back(schema.value_code(i, j[i].get<std::string>()));
	}
	return out;
}

QueryStatus status_from(const std::string &s) {
	if (s == "underflow") {
		return QueryStatus::underflow;
	}
	if (s == "valid") {
		return QueryStatus::valid;
	}
	if (s == "overflow") {
		return QueryStatus::overflow;
	}
	throw ParseError("unknown query status '" + s + "'");
}

} // namespace

std::string snapshot_to_json(const Snapshot &snapshot, const Schema &schema) {
	json root;
	root["estimator"] = snapshot.estimator;
	json attrs = json::array();
	for (const auto &a : schema.attributes()) {
		attrs.push_back(a.name);
	}
	root["attributes"] = attrs;
	json cond = json::object();
	for (const auto &p : snapshot.condition) {
		cond[schema.attribute(p.attribute).name] = schema.value_name(p.attribute, p.value);
	}
	root["condition"] = cond;

	json records = json::array();
	for (const auto &rec : snapshot.records) {
		json r;
		r["signature"] = rec.signature.assignment;
		json history = json::array();
		for (const auto &e : rec.history) {
			json h;
			h["round"] = e.round;
			h["prefix"] = e.terminal.prefix;
			h["status"] = to_string(e.outcome.status);
			h["cost"] = e.cost;
			json tuples = json::array();
			for (const auto &t : e.outcome.returned) {
				tuples.push_back({{"id", t.id}, {"values", values_json(schema, t.values)}});
			}
			h["returned"] = std::move(tuples);
			history.push_back(std::move(h));
		}
		r["history"] = std::move(history);
		records.push_back(std::move(r));
	}
	root["records"] = std::move(records);
	return root.dump(1);
}

Snapshot snapshot_from_json(const std::string &text, const Schema &schema) {
	Snapshot snap;
	try {
		const auto root = json::parse(text);
		snap.estimator = root.at("estimator").get<std::string>();
		const auto &attrs = root.at("attributes");
		if (attrs.size() != schema.size()) {
			throw ParseError("snapshot has " + std::to_string(attrs.size()) + " attributes, schema has " +
			                 std::to_string(schema.size()));
		}
		for (std::size_t i = 0; i < attrs.size(); ++i) {
			if (attrs[i].get<std::string>() != schema.attribute(i).name) {
				throw ParseError("snapshot attribute " + std::to_string(i) + " is '" + attrs[i].get<std::string>() +
				                 "', schema has '" + schema.attribute(i).name + "'");
			}
		}
		for (const auto &[name, value] : root.at("condition").items()) {
			const auto a = schema.attribute_index(name);
			snap.condition.push_back({a, schema.value_code(a, value.get<std::string>())});
		}
		const QueryTree tree(schema, snap.condition);
		for (const auto &r : root.at("records")) {
			DrillDownRecord rec;
			rec.signature.assignment = r.at("signature").get<std::vector<Value>>();
			for (const auto &h : r.at("history")) {
				HistoryEntry e;
				e.round = h.at("round").get<int>();
				e.terminal.prefix = h.at("prefix").get<std::vector<Value>>();
				e.terminal.depth = e.terminal.prefix.size();
				e.outcome.status = status_from(h.at("status").get<std::string>());
				e.cost = h.at("cost").get<std::size_t>();
				for (const auto &t : h.at("returned")) {
					e.outcome.returned.push_back({t.at("id").get<TupleId>(), values_from(schema, t.at("values"))});
				}
				e.inverse_p = tree.inverse_p(e.terminal);
				rec.history.push_back(std::move(e));
			}
			snap.records.push_back(std::move(rec));
		}
	} catch (const json::exception &e) {
		throw ParseError(std::string("snapshot: ") + e.what());
	} catch (const SchemaError &e) {
		throw ParseError(std::string("snapshot: ") + e.what());
	}
	return snap;
}

} // namespace hidden_agg
