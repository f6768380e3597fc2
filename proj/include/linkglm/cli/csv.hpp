#pragma once

#include "linkglm/block_partition.hpp"
#include "linkglm/cli/config.hpp"
#include "linkglm/estimators.hpp"

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace linkglm::cli {

/// Unreadable or inconsistent input data.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Delimited text with a header row. Row i came from line line_numbers[i].
struct Table {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::size_t column(const std::string& name) const;
    bool has_column(const std::string& name) const;
    double number(std::size_t row, std::size_t col) const;
    std::size_t size() const { return rows.size(); }
};

Table parse_table(std::istream& in, char delimiter, const std::string& source = "<stream>");
Table read_table(const std::string& path, char delimiter);

/// Appends derived columns and drops rows matching any filter rule.
Table preprocess(Table table, const DataConfig& cfg);

/// Equivalence classes of the given columns; rows agree on every value.
BlockPartition blocks_from_columns(const Table& table, const std::vector<std::string>& columns);

struct Ingested {
    MergedDataset<double> data;
    std::vector<std::string> terms;  // column names of X
    Table table;                     // rows after filtering
    std::optional<Vector<double>> y_truth;  // correctly linked responses, when the file has them
};

/// Builds the design (intercept, covariates, indicator expansions,
/// interactions) and the response, with blocks from cfg.blocking.
Ingested ingest_table(const Table& raw, const DataConfig& cfg);
Ingested ingest_csv(const DataConfig& cfg);

} // namespace linkglm::cli
