#pragma once

#include "linkglm/cli/config.hpp"
#include "linkglm/simlab.hpp"

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace linkglm::cli {

/// First line of every records file. It carries the creation time and is the
/// only line allowed to differ between identical runs.
Json header_record(const std::string& command, const std::string& created);
std::string utc_timestamp();

/// Numbers are written in shortest round-trip form; NaN becomes null and
/// infinities become the strings "inf" and "-inf".
Json encode_number(double v);
double decode_number(const Json& j, const std::string& field);

Json to_record(const sim::ReplicationResult& rep, const sim::MethodRecord& r, bool timings);

/// One line per (replication, method, lambda) after the header line.
void write_records(std::ostream& out, const std::string& command, const std::string& created,
                   const std::vector<sim::ReplicationResult>& results, bool timings);

/// Inverse of write_records. Throws InputError on malformed lines.
std::vector<sim::ReplicationResult> read_records(std::istream& in);

/// Per (method, pre-factor) means and standard errors as tab-separated text.
void write_summary(std::ostream& out, const std::vector<sim::ReplicationResult>& results);

/// Writes one JSON value per line.
void write_lines(std::ostream& out, const std::vector<Json>& lines);

} // namespace linkglm::cli
