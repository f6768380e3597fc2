#include "linkglm/cli/records.hpp"

#include "linkglm/cli/csv.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace linkglm::cli {

Json header_record(const std::string& command, const std::string& created)
{
    return Json{{"schema_version", kSchemaVersion}, {"kind", "header"}, {"command", command}, {"created", created}};
}

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

Json encode_number(double v)
{
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double decode_number(const Json& j, const std::string& field)
{
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw InputError("record field '" + field + "' is not a number");
}

Json to_record(const sim::ReplicationResult& rep, const sim::MethodRecord& r, bool timings)
{
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "replication";
    j["replication"] = rep.replication;
    j["sigma_y"] = encode_number(rep.sigma_y);
    j["lambda_max"] = encode_number(rep.lambda_max);
    j["realized_mismatch_fraction"] = encode_number(rep.realized_mismatch_fraction);
    j["method"] = sim::to_string(r.method);
    j["prefactor"] = encode_number(r.prefactor);
    j["lambda"] = encode_number(r.lambda);
    j["beta_error"] = encode_number(r.beta_error);
    j["theta_error"] = encode_number(r.theta_error);
    j["deviance"] = encode_number(r.deviance);
    j["hamming"] = encode_number(r.hamming);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["na"] = r.na;
    if (timings) j["runtime_ms"] = encode_number(r.runtime_ms);
    return j;
}

void write_lines(std::ostream& out, const std::vector<Json>& lines)
{
    for (const auto& j : lines) out << j.dump() << '\n';
}

void write_records(std::ostream& out, const std::string& command, const std::string& created,
                   const std::vector<sim::ReplicationResult>& results, bool timings)
{
    out << header_record(command, created).dump() << '\n';
    for (const auto& rep : results)
        for (const auto& r : rep.records) out << to_record(rep, r, timings).dump() << '\n';
}

std::vector<sim::ReplicationResult> read_records(std::istream& in)
{
    std::vector<sim::ReplicationResult> out;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = "records line " + std::to_string(lineno);
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw InputError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("schema_version") || j["schema_version"] != kSchemaVersion)
            throw InputError(where + ": missing or unsupported schema_version");
        const std::string kind = j.value("kind", "");
        if (kind == "header") {
            header = true;
            continue;
        }
        if (kind != "replication") throw InputError(where + ": unexpected record kind '" + kind + "'");
        try {
            const int rep = j.at("replication").get<int>();
            if (out.empty() || out.back().replication != rep) {
                sim::ReplicationResult r;
                r.replication = rep;
                r.sigma_y = decode_number(j.at("sigma_y"), "sigma_y");
                r.lambda_max = decode_number(j.at("lambda_max"), "lambda_max");
                r.realized_mismatch_fraction = decode_number(j.at("realized_mismatch_fraction"), "realized_mismatch_fraction");
                out.push_back(r);
            }
            sim::MethodRecord m;
            m.method = sim::parse_method(j.at("method").get<std::string>());
            m.prefactor = decode_number(j.at("prefactor"), "prefactor");
            m.lambda = decode_number(j.at("lambda"), "lambda");
            m.beta_error = decode_number(j.at("beta_error"), "beta_error");
            m.theta_error = decode_number(j.at("theta_error"), "theta_error");
            m.deviance = decode_number(j.at("deviance"), "deviance");
            m.hamming = decode_number(j.at("hamming"), "hamming");
            m.converged = j.at("converged").get<bool>();
            m.iterations = j.at("iterations").get<int>();
            m.na = j.at("na").get<bool>();
            m.runtime_ms = j.contains("runtime_ms") ? decode_number(j.at("runtime_ms"), "runtime_ms") : 0.0;
            out.back().records.push_back(m);
        } catch (const InputError& e) {
            throw InputError(where + ": " + e.what());
        } catch (const std::exception& e) {
            throw InputError(where + ": " + e.what());
        }
    }
    if (!header) throw InputError("records: header line is missing");
    return out;
}

namespace {

struct Accumulator {
    double lambda_sum = 0;
    int count = 0;
    int na = 0;
    double sum_beta = 0, sum2_beta = 0;
    double sum_theta = 0, sum2_theta = 0;
    double sum_dev = 0, sum2_dev = 0;
    double sum_ham = 0;

    void add(const sim::MethodRecord& r)
    {
        if (r.na) {
            ++na;
            return;
        }
        ++count;
        lambda_sum += r.lambda;
        sum_beta += r.beta_error;
        sum2_beta += r.beta_error * r.beta_error;
        sum_theta += r.theta_error;
        sum2_theta += r.theta_error * r.theta_error;
        sum_dev += r.deviance;
        sum2_dev += r.deviance * r.deviance;
        sum_ham += r.hamming;
    }
};

double mean_of(double s, int n) { return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN(); }

double se_of(double s, double s2, int n)
{
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = s / n;
    return std::sqrt(std::max(0.0, (s2 - n * m * m) / (n - 1)) / n);
}

std::string fmt(double v)
{
    if (std::isnan(v)) return "NA";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

} // namespace

void write_summary(std::ostream& out, const std::vector<sim::ReplicationResult>& results)
{
    std::map<std::pair<int, double>, Accumulator> acc;
    for (const auto& rep : results)
        for (const auto& r : rep.records) acc[{static_cast<int>(r.method), r.prefactor}].add(r);
    out << "schema_version\tmethod\tprefactor\tmean_lambda\tn\tna\tmean_beta_error\tse_beta_error\tmean_theta_error\t"
           "se_theta_error\tmean_deviance\tse_deviance\tmean_hamming\n";
    for (const auto& [key, a] : acc) {
        out << kSchemaVersion << '\t' << sim::to_string(static_cast<sim::Method>(key.first)) << '\t' << fmt(key.second) << '\t'
            << fmt(mean_of(a.lambda_sum, a.count)) << '\t' << a.count << '\t' << a.na << '\t' << fmt(mean_of(a.sum_beta, a.count))
            << '\t' << fmt(se_of(a.sum_beta, a.sum2_beta, a.count)) << '\t' << fmt(mean_of(a.sum_theta, a.count)) << '\t'
            << fmt(se_of(a.sum_theta, a.sum2_theta, a.count)) << '\t' << fmt(mean_of(a.sum_dev, a.count)) << '\t'
            << fmt(se_of(a.sum_dev, a.sum2_dev, a.count)) << '\t' << fmt(mean_of(a.sum_ham, a.count)) << '\n';
    }
}

} // namespace linkglm::cli
