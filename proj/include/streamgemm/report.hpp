#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace streamgemm {

// One line of a benchmark report. Measured rows without a device model
// leave gflops_per_watt empty.
struct ReportRow {
  std::string label;
  std::size_t m = 0, k = 0, n = 0;
  std::string engine;
  double seconds = 0;
  double gflops = 0;
  std::optional<double> gflops_per_watt;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct BenchmarkReport {
  std::vector<ReportRow> rows;
  // Timestamp, host description, config echo, timing spread and so on.
  // Serialized as `# key=value` lines ahead of the CSV header.
  std::vector<std::pair<std::string, std::string>> metadata;

  const ReportRow* find(const std::string& label) const;
  friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

inline constexpr const char* kReportHeader = "label,m,k,n,engine,seconds,gflops,gflops_per_watt";

/// Doubles are written with 17 significant digits so parse_report_csv
/// returns an identical report.
std::string report_to_csv(const BenchmarkReport& report);
/// Throws SchemaMismatch on a wrong header, malformed row or repeated label.
BenchmarkReport parse_report_csv(const std::string& text);

/// Concatenates rows and metadata; repeated labels are a SchemaMismatch.
BenchmarkReport merge_reports(std::span<const BenchmarkReport> reports);

struct RatioRow {
  std::string label;
  double speedup = 0;                            // baseline seconds / row seconds
  double gflops_ratio = 0;                       // row gflops / baseline gflops
  std::optional<double> gflops_per_watt_ratio;   // only when both sides have it
};

/// Normalizes every row to `baseline`. Throws SchemaMismatch when the label
/// is missing.
std::vector<RatioRow> ratio_table(const BenchmarkReport& report, const std::string& baseline);
std::string format_ratio_table(std::span<const RatioRow> ratios, const std::string& baseline);

/// Two-column `label,value` data for one metric ("seconds", "gflops" or
/// "gflops_per_watt"); rows lacking the metric are skipped.
std::string plot_data(const BenchmarkReport& report, const std::string& metric);

}  // namespace streamgemm
