#include "docrec/record_io.hpp"

#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

namespace docrec {

using nlohmann::json;

namespace {

constexpr std::string_view kHeaderKind = "docrec-dataset";

json node_to_json(const RecordSchema& schema, const Node& n) {
    return json{{"type", schema.type(n.type).name}, {"dprops", n.discrete}, {"cprops", n.continuous}};
}

json rel_to_json(const RecordSchema& schema, const RelationshipNode& r) {
    return json{{"type", schema.type(r.type).name},
                {"endpoints", r.endpoints},
                {"dprops", r.discrete},
                {"cprops", r.continuous}};
}

template <typename T>
std::vector<T> read_array(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) return {};
    return it->get<std::vector<T>>();
}

Record record_from_json(const json& doc, const RecordSchema& schema) {
    if (!doc.is_object()) throw ParseError("record must be a JSON object", 0);
    if (const auto it = doc.find("schema"); it != doc.end() && it->get<std::string>() != schema.name) {
        throw InvalidInput("record schema '" + it->get<std::string>() + "' does not match '" + schema.name + "'");
    }
    Record r;
    for (const auto& jn : doc.at("nodes")) {
        Node n;
        n.type = schema.type_index(jn.at("type").get<std::string>());
        n.discrete = read_array<int>(jn, "dprops");
        n.continuous = read_array<double>(jn, "cprops");
        r.nodes.push_back(std::move(n));
    }
    for (const auto& jr : doc.at("relationships")) {
        RelationshipNode rel;
        rel.type = schema.type_index(jr.at("type").get<std::string>());
        rel.endpoints = read_array<int>(jr, "endpoints");
        rel.discrete = read_array<int>(jr, "dprops");
        rel.continuous = read_array<double>(jr, "cprops");
        r.relationships.push_back(std::move(rel));
    }
    return r;
}

json parse_json(std::string_view text, std::size_t base_offset) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), base_offset + e.byte);
    }
}

}  // namespace

std::string serialize_record(const RecordSchema& schema, const Record& record) {
    validate_record(schema, record);
    json doc;
    doc["schema"] = schema.name;
    doc["nodes"] = json::array();
    for (const auto& n : record.nodes) doc["nodes"].push_back(node_to_json(schema, n));
    doc["relationships"] = json::array();
    for (const auto& r : record.relationships) doc["relationships"].push_back(rel_to_json(schema, r));
    return doc.dump();
}

Record parse_record(std::string_view text, const RecordSchema& schema) {
    const json doc = parse_json(text, 0);
    Record r;
    try {
        r = record_from_json(doc, schema);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed record: ") + e.what(), 0);
    }
    validate_record(schema, r);
    return r;
}

void write_dataset(std::ostream& out, const RecordSchema& schema, const DatasetHeader& header,
                   const std::vector<Record>& records) {
    json h{{"kind", kHeaderKind},
           {"schema", header.schema},
           {"config", json::parse(header.config_json)},
           {"seeds", {header.seed_begin, header.seed_end}},
           {"count", records.size()}};
    out << h.dump() << '\n';
    for (const auto& r : records) out << serialize_record(schema, r) << '\n';
}

Dataset read_dataset(std::istream& in, const RecordSchema& schema) {
    Dataset ds;
    ds.header.schema = schema.name;
    std::string line;
    std::size_t offset = 0;
    bool first = true;
    while (std::getline(in, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        if (first) {
            first = false;
            const json doc = parse_json(line, line_offset);
            if (doc.is_object() && doc.value("kind", "") == kHeaderKind) {
                ds.header.schema = doc.at("schema").get<std::string>();
                ds.header.config_json = doc.at("config").dump();
                ds.header.seed_begin = doc.at("seeds").at(0).get<long long>();
                ds.header.seed_end = doc.at("seeds").at(1).get<long long>();
                if (ds.header.schema != schema.name) {
                    throw InvalidInput("dataset schema '" + ds.header.schema + "' does not match '" + schema.name + "'");
                }
                continue;
            }
        }
        try {
            ds.records.push_back(parse_record(line, schema));
        } catch (const ParseError& e) {
            throw ParseError(std::string("dataset line: ") + e.what(), line_offset);
        }
    }
    return ds;
}

}  // namespace docrec
