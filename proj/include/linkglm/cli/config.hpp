#pragma once

#include "linkglm/family.hpp"
#include "linkglm/simlab.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace linkglm::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Malformed or inconsistent configuration; names the offending field.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& field, const std::string& message)
        : std::runtime_error(field + ": " + message), field(field) {}
    std::string field;
};

struct FamilyConfig {
    std::string kind = "gaussian";
    double dispersion = 1.0;   // gaussian: sigma^2
    double shape = 1.0;        // gamma
    int trials = 1;            // binomial
    std::string link = "canonical";

    Family<double> build() const;
};

/// Drops rows for which `column op value` holds (op "in" takes a list).
struct FilterRule {
    std::string column;
    std::string op = "==";
    std::vector<std::string> values;
};

/// name = round?(scale * from + offset).
struct DerivedColumn {
    std::string name;
    std::string from;
    double scale = 1.0;
    double offset = 0.0;
    bool round = false;
};

struct CategoricalSpec {
    std::string column;
    std::optional<std::string> reference;
    std::vector<std::string> levels;  // empty: levels present in the data
};

/// name = 1{column in values}.
struct IndicatorSpec {
    std::string name;
    std::string column;
    std::vector<std::string> values;
};

/// name = a * b, where a and b are term names or numeric columns.
struct InteractionSpec {
    std::string name;
    std::string a;
    std::string b;
};

struct DataConfig {
    std::string path;
    char delimiter = ',';
    std::string response;
    std::optional<std::string> truth_response;
    bool intercept = true;
    std::vector<std::string> covariates;
    std::vector<CategoricalSpec> categorical;
    std::vector<IndicatorSpec> indicators;
    std::vector<InteractionSpec> interactions;
    std::string transform = "none";  // none | sqrt
    std::vector<std::string> blocking;
    std::vector<FilterRule> filters;
    std::vector<DerivedColumn> derived;
};

struct MethodConfig {
    std::vector<std::string> methods{"naive", "proposed"};
    std::optional<double> lambda;
    std::vector<double> prefactors;
    double validation_fraction = 0.0;
    std::string sigma_mode = "data_only";
    FitOptions fit{};
};

struct OutputConfig {
    std::string directory;
    bool timings = false;
};

struct CaseStudyConfig {
    int replications = 100;
    std::vector<std::string> linkage_blocking;
    std::vector<std::vector<std::string>> blocking_variants;
};

struct RunConfig {
    std::string command;
    std::uint64_t seed = 1;
    int threads = 0;
    FamilyConfig family;
    std::optional<DataConfig> data;
    MethodConfig method;
    OutputConfig output;
    std::optional<sim::SimulationScenario> simulation;
    std::optional<CaseStudyConfig> casestudy;
    Json source;  // resolved configuration echo
};

/// Parses and validates a configuration document. Unknown keys are rejected.
RunConfig parse_config(const Json& doc);
RunConfig load_config(const std::string& path);

/// Full resolved configuration, including defaults.
Json resolved_config(const RunConfig& cfg);

} // namespace linkglm::cli
