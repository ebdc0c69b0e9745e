#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "docrec/record.hpp"

namespace docrec {

/// One record as a single line of JSON:
/// {"schema": ..., "nodes": [{"type", "dprops", "cprops"}], "relationships": [{"type", "endpoints", "dprops", "cprops"}]}
///
/// Doubles are written in shortest round-trip form, so parse(serialize(r)) == r bit for bit.
std::string serialize_record(const RecordSchema& schema, const Record& record);

/// Throws ParseError (with byte offset) on malformed text and InvalidInput on schema violations.
Record parse_record(std::string_view text, const RecordSchema& schema);

/// Newline-delimited dataset: a header line followed by one record per line.
struct DatasetHeader {
    std::string schema;
    std::string config_json = "{}";
    long long seed_begin = 0;
    long long seed_end = 0;
};

void write_dataset(std::ostream& out, const RecordSchema& schema, const DatasetHeader& header,
                   const std::vector<Record>& records);

struct Dataset {
    DatasetHeader header;
    std::vector<Record> records;
};

/// Reads a dataset file; a file without a header line is accepted as plain records.
Dataset read_dataset(std::istream& in, const RecordSchema& schema);

}  // namespace docrec
