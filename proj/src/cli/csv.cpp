#include "linkglm/cli/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace linkglm::cli {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Quoted fields may contain the delimiter and doubled quotes, but not newlines.
std::vector<std::string> split_line(const std::string& line, char delim)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_double(const std::string& s, double& out)
{
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}

// Canonical text of a cell for level and filter comparisons: numbers compare by value.
std::string canonical(const std::string& s)
{
    double v = 0.0;
    if (!parse_double(s, v)) return s;
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

bool rule_matches(const Table& t, std::size_t row, std::size_t col, const FilterRule& rule)
{
    const std::string& cell = t.rows[row][col];
    if (rule.op == "in") {
        const std::string c = canonical(cell);
        return std::any_of(rule.values.begin(), rule.values.end(), [&](const std::string& v) { return canonical(v) == c; });
    }
    if (rule.op == "==") return canonical(cell) == canonical(rule.values[0]);
    if (rule.op == "!=") return canonical(cell) != canonical(rule.values[0]);
    double lhs = 0.0, rhs = 0.0;
    if (!parse_double(rule.values[0], rhs)) throw InputError("filter on '" + rule.column + "': threshold '" + rule.values[0] + "' is not numeric");
    lhs = t.number(row, col);
    if (rule.op == "<") return lhs < rhs;
    if (rule.op == "<=") return lhs <= rhs;
    if (rule.op == ">") return lhs > rhs;
    return lhs >= rhs;
}

std::string location(const Table& t, std::size_t row)
{
    return t.source + ", line " + std::to_string(t.line_numbers[row]);
}

} // namespace

std::size_t Table::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

bool Table::has_column(const std::string& name) const
{
    return std::find(header.begin(), header.end(), name) != header.end();
}

double Table::number(std::size_t row, std::size_t col) const
{
    double v = 0.0;
    if (!parse_double(rows[row][col], v))
        throw InputError(location(*this, row) + ": column '" + header[col] + "' has non-numeric value '" + rows[row][col] + "'");
    return v;
}

Table parse_table(std::istream& in, char delimiter, const std::string& source)
{
    Table t;
    t.source = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto cells = split_line(line, delimiter);
        if (t.header.empty()) {
            std::set<std::string> seen;
            for (const auto& h : cells) {
                if (h.empty()) throw InputError(source + ", line " + std::to_string(lineno) + ": empty column name in header");
                if (!seen.insert(h).second) throw InputError(source + ": duplicate column '" + h + "'");
            }
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw InputError(source + ", line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) throw InputError(source + ": missing header row");
    return t;
}

Table read_table(const std::string& path, char delimiter)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open data file '" + path + "'");
    return parse_table(in, delimiter, path);
}

Table preprocess(Table t, const DataConfig& cfg)
{
    for (const auto& dc : cfg.derived) {
        if (t.has_column(dc.name)) throw InputError(t.source + ": derived column '" + dc.name + "' already exists");
        const std::size_t src = t.column(dc.from);
        t.header.push_back(dc.name);
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            double v = dc.scale * t.number(i, src) + dc.offset;
            if (dc.round) v = std::round(v);
            std::ostringstream os;
            os.precision(17);
            os << v;
            t.rows[i].push_back(os.str());
        }
    }
    std::vector<std::size_t> cols;
    for (const auto& rule : cfg.filters) cols.push_back(t.column(rule.column));
    Table out;
    out.source = t.source;
    out.header = t.header;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        bool drop = false;
        for (std::size_t k = 0; k < cfg.filters.size() && !drop; ++k) drop = rule_matches(t, i, cols[k], cfg.filters[k]);
        if (drop) continue;
        out.rows.push_back(std::move(t.rows[i]));
        out.line_numbers.push_back(t.line_numbers[i]);
    }
    return out;
}

BlockPartition blocks_from_columns(const Table& t, const std::vector<std::string>& columns)
{
    if (t.rows.empty()) throw InputError(t.source + ": no rows left to block");
    std::vector<std::size_t> cols;
    for (const auto& c : columns) cols.push_back(t.column(c));
    std::vector<std::vector<std::string>> keys(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t c : cols) {
            if (t.rows[i][c].empty())
                throw InputError(location(t, i) + ": blocking column '" + t.header[c] + "' is empty");
            keys[i].push_back(canonical(t.rows[i][c]));
        }
    }
    return BlockPartition::from_labels(keys);
}

Ingested ingest_table(const Table& raw, const DataConfig& cfg)
{
    Ingested out;
    out.table = preprocess(raw, cfg);
    const Table& t = out.table;
    const std::size_t n = t.rows.size();
    if (n == 0) throw InputError(t.source + ": no rows left after filtering");

    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::map<std::string, std::size_t> term_index;
    auto add = [&](const std::string& name, std::vector<double> values) {
        if (term_index.count(name)) throw InputError("duplicate term '" + name + "'");
        term_index[name] = names.size();
        names.push_back(name);
        columns.push_back(std::move(values));
    };
    auto numeric_column = [&](const std::string& name) {
        const std::size_t c = t.column(name);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = t.number(i, c);
        return v;
    };

    if (cfg.intercept) add("(intercept)", std::vector<double>(n, 1.0));
    for (const auto& name : cfg.covariates) add(name, numeric_column(name));
    for (const auto& cat : cfg.categorical) {
        const std::size_t c = t.column(cat.column);
        std::vector<std::string> levels;
        if (!cat.levels.empty()) {
            for (const auto& l : cat.levels) levels.push_back(canonical(l));
        } else {
            std::set<std::string> present;
            for (std::size_t i = 0; i < n; ++i) present.insert(canonical(t.rows[i][c]));
            levels.assign(present.begin(), present.end());
            std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
                double x = 0.0, y = 0.0;
                const bool na = parse_double(a, x), nb = parse_double(b, y);
                if (na && nb) return x < y;
                return !na && !nb ? a < b : na;
            });
        }
        const std::string ref = cat.reference ? canonical(*cat.reference) : (levels.empty() ? std::string() : levels.front());
        if (std::find(levels.begin(), levels.end(), ref) == levels.end())
            throw InputError("categorical '" + cat.column + "': reference level '" + ref + "' does not occur");
        for (std::size_t i = 0; i < n; ++i)
            if (std::find(levels.begin(), levels.end(), canonical(t.rows[i][c])) == levels.end())
                throw InputError(location(t, i) + ": column '" + cat.column + "' has undeclared level '" + t.rows[i][c] + "'");
        for (const auto& level : levels) {
            if (level == ref) continue;
            std::vector<double> v(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = canonical(t.rows[i][c]) == level ? 1.0 : 0.0;
            add(cat.column + "=" + level, std::move(v));
        }
    }
    for (const auto& ind : cfg.indicators) {
        const std::size_t c = t.column(ind.column);
        std::set<std::string> values;
        for (const auto& v : ind.values) values.insert(canonical(v));
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = values.count(canonical(t.rows[i][c])) ? 1.0 : 0.0;
        add(ind.name, std::move(v));
    }
    auto operand = [&](const std::string& name) {
        const auto it = term_index.find(name);
        if (it != term_index.end()) return columns[it->second];
        return numeric_column(name);
    };
    for (const auto& inter : cfg.interactions) {
        const auto a = operand(inter.a);
        const auto b = operand(inter.b);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = a[i] * b[i];
        add(inter.name, std::move(v));
    }
    if (names.empty()) throw InputError("the design has no columns");

    auto response = [&](const std::string& name) {
        Vector<double> y(static_cast<Index>(n));
        const std::size_t c = t.column(name);
        for (std::size_t i = 0; i < n; ++i) {
            double v = t.number(i, c);
            if (cfg.transform == "sqrt") {
                if (v < 0.0) throw InputError(location(t, i) + ": negative response cannot be square-root transformed");
                v = std::sqrt(v);
            }
            y(static_cast<Index>(i)) = v;
        }
        return y;
    };

    out.data.X.resize(static_cast<Index>(n), static_cast<Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) out.data.X(static_cast<Index>(i), static_cast<Index>(j)) = columns[j][i];
    out.data.y = response(cfg.response);
    if (cfg.truth_response) out.y_truth = response(*cfg.truth_response);
    if (!cfg.blocking.empty()) out.data.blocks = blocks_from_columns(t, cfg.blocking);
    out.terms = std::move(names);
    return out;
}

Ingested ingest_csv(const DataConfig& cfg)
{
    return ingest_table(read_table(cfg.path, cfg.delimiter), cfg);
}

} // namespace linkglm::cli
