#pragma once

#include "linkglm/cli/config.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace linkglm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Output directory: explicit value, else LINKGLM_OUTPUT_DIR, else "results".
std::filesystem::path output_directory(const RunConfig& cfg);

void run_simulate(const RunConfig& cfg, const std::filesystem::path& out);
void run_fit(const RunConfig& cfg, const std::filesystem::path& out);
void run_recover(const RunConfig& cfg, const std::filesystem::path& out);
void run_casestudy(const RunConfig& cfg, const std::filesystem::path& out);

/// Dispatches on cfg.command and writes records.ndtext, summary.tsv and
/// config.resolved into the output directory.
void run(const RunConfig& cfg);

/// Full command line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace linkglm::cli
