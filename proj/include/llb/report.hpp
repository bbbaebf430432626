#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "llb/metrics.hpp"
#include "llb/protocol.hpp"

namespace llb {

using json = nlohmann::json;

json to_json(const HyperParams& hp);
json to_json(const ExperimentConfig& config);
json to_json(const MetricsReport& report);
json to_json(const AggregateReport& agg);

/// Missing keys keep their defaults; unknown keys and type mismatches throw
/// ConfigError naming the offending path.
ExperimentConfig config_from_json(const json& j);
MetricsReport report_from_json(const json& j);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Hex SHA-1 of the canonical (key-sorted, compact) dump, framed as a git blob.
std::string config_hash(const json& config);

inline constexpr std::string_view kSummaryCsvHeader =
    "learner,seed,A_T,F_T,LCA_10,F_wst_test,F_wst_mem,violations,mean_step_seconds,params";

/// One row per report; missing optional metrics are empty fields.
std::string summary_csv(const std::vector<MetricsReport>& reports, bool header = true);
/// learner,seed,task,b,accuracy: the a(k, b, k) curve, T*(beta+1) rows per report.
std::string curve_csv(const std::vector<MetricsReport>& reports, bool header = true);
/// learner,seed,task,accuracy: the a(k, 0, k) series.
std::string zero_shot_csv(const std::vector<MetricsReport>& reports, bool header = true);

/// Side-by-side table of aggregates (mean +- std over seeds).
std::string compare_table(const std::vector<AggregateReport>& rows);

struct WrittenFiles {
  std::filesystem::path report_json;
  std::filesystem::path summary_csv;
  std::filesystem::path curve_csv;
  std::filesystem::path zero_shot_csv;
  std::filesystem::path manifest_json;
};

/// Writes report.json, summary.csv, curves.csv, zero_shot.csv and manifest.json
/// under `dir` (created if needed). IO failures throw std::runtime_error with the path.
WrittenFiles emit_report(const ExperimentResult& result, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace llb
