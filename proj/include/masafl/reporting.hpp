#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "masafl/harness.hpp"

namespace masafl {

inline constexpr const char* kVersion = "0.1.0";

// Shortest round-trip decimal, '.' separator regardless of locale.
std::string format_number(double v);

// header round,ma,ba,ra,tpr,fpr,n_selected; undefined TPR/FPR are empty.
std::string rounds_csv(const ExperimentReport& report);
// Full nested report, including per-client unlearning losses and scores.
std::string report_json(const ExperimentReport& report);
// Plain-text method x MA/BA/RA table.
std::string summary_table(const ExperimentReport& report);

struct EmittedFiles {
  std::filesystem::path csv;
  std::filesystem::path report;
  std::filesystem::path summary;
};

// Writes rounds.csv, report.json and summary.txt into out_dir (created if
// missing). Output is a pure function of the report. Throws IoError.
EmittedFiles emit_results(const ExperimentReport& report, const std::filesystem::path& out_dir);

struct RunManifest {
  std::string config_json;
  std::string version = kVersion;
  std::string started_at;
  std::string finished_at;
  EmittedFiles outputs;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

struct ComparisonRow {
  std::string label;  // defense name plus run directory
  std::string defense;
  double ba = 0.0;
  double ra = 0.0;
  double ma = 0.0;
  double delta_ba = 0.0;  // vs the first run
  double delta_ra = 0.0;
  bool lowest_ba = false;
  bool highest_ra = false;
};

struct Comparison {
  std::string scenario;
  std::vector<ComparisonRow> rows;
};

// Requires >= 2 manifests describing the same dataset and attack; otherwise
// throws ConfigError. Missing files raise IoError with the path.
Comparison compare_runs(const std::vector<std::filesystem::path>& manifest_paths);
std::string render_comparison(const Comparison& cmp);

}  // namespace masafl
