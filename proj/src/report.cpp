#include "streamgemm/report.hpp"

#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>

#include "streamgemm/error.hpp"

namespace streamgemm {

const ReportRow* BenchmarkReport::find(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return &r;
  return nullptr;
}

namespace {

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

[[noreturn]] void schema(const std::string& why) { throw Error(ErrorCode::SchemaMismatch, why); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    schema("line " + std::to_string(line) + ": '" + s + "' is not a number");
  return v;
}

std::size_t to_size(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    schema("line " + std::to_string(line) + ": '" + s + "' is not a dimension");
  return v;
}

void check_label(const std::string& label) {
  if (label.empty() || label.find_first_of(",\n\r") != std::string::npos)
    schema("label '" + label + "' is empty or contains a separator");
}

}  // namespace

std::string report_to_csv(const BenchmarkReport& report) {
  std::ostringstream ss;
  std::set<std::string> labels;
  for (const auto& [key, value] : report.metadata) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos)
      schema("metadata entry '" + key + "' cannot be serialized");
    ss << "# " << key << "=" << value << "\n";
  }
  ss << kReportHeader << "\n";
  for (const auto& r : report.rows) {
    check_label(r.label);
    if (r.engine.find_first_of(",\n\r") != std::string::npos) schema("engine '" + r.engine + "' contains a separator");
    if (!labels.insert(r.label).second) schema("duplicate label '" + r.label + "'");
    ss << r.label << "," << r.m << "," << r.k << "," << r.n << "," << r.engine << "," << num(r.seconds) << ","
       << num(r.gflops) << ",";
    if (r.gflops_per_watt) ss << num(*r.gflops_per_watt);
    ss << "\n";
  }
  return ss.str();
}

BenchmarkReport parse_report_csv(const std::string& text) {
  BenchmarkReport report;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::set<std::string> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line.rfind("# ", 0) == 0) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) schema("line " + std::to_string(line_no) + ": metadata without '='");
        report.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
        continue;
      }
      if (line != kReportHeader) schema("unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 8) schema("line " + std::to_string(line_no) + ": expected 8 fields, got " + std::to_string(f.size()));
    ReportRow r;
    r.label = f[0];
    check_label(r.label);
    r.m = to_size(f[1], line_no);
    r.k = to_size(f[2], line_no);
    r.n = to_size(f[3], line_no);
    r.engine = f[4];
    r.seconds = to_double(f[5], line_no);
    r.gflops = to_double(f[6], line_no);
    if (!f[7].empty()) r.gflops_per_watt = to_double(f[7], line_no);
    if (!labels.insert(r.label).second) schema("duplicate label '" + r.label + "'");
    report.rows.push_back(std::move(r));
  }
  if (!header) schema("missing header row");
  return report;
}

BenchmarkReport merge_reports(std::span<const BenchmarkReport> reports) {
  BenchmarkReport merged;
  std::set<std::string> labels;
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      if (!labels.insert(r.label).second) schema("label '" + r.label + "' appears in more than one input");
      merged.rows.push_back(r);
    }
    merged.metadata.insert(merged.metadata.end(), rep.metadata.begin(), rep.metadata.end());
  }
  return merged;
}

std::vector<RatioRow> ratio_table(const BenchmarkReport& report, const std::string& baseline) {
  const ReportRow* base = report.find(baseline);
  if (!base) schema("baseline label '" + baseline + "' not found");
  std::vector<RatioRow> out;
  for (const auto& r : report.rows) {
    RatioRow q;
    q.label = r.label;
    q.speedup = base->seconds / r.seconds;
    q.gflops_ratio = r.gflops / base->gflops;
    if (r.gflops_per_watt && base->gflops_per_watt) q.gflops_per_watt_ratio = *r.gflops_per_watt / *base->gflops_per_watt;
    out.push_back(std::move(q));
  }
  return out;
}

std::string format_ratio_table(std::span<const RatioRow> ratios, const std::string& baseline) {
  std::ostringstream ss;
  ss << "normalized to '" << baseline << "'\n";
  ss << std::left << std::setw(24) << "label" << std::right << std::setw(14) << "speedup" << std::setw(14)
     << "gflops_x" << std::setw(16) << "gflops/W_x" << "\n";
  for (const auto& r : ratios) {
    ss << std::left << std::setw(24) << r.label << std::right << std::fixed << std::setprecision(3) << std::setw(14)
       << r.speedup << std::setw(14) << r.gflops_ratio << std::setw(16);
    if (r.gflops_per_watt_ratio)
      ss << *r.gflops_per_watt_ratio;
    else
      ss << "-";
    ss << "\n";
    ss.unsetf(std::ios::fixed);
  }
  return ss.str();
}

std::string plot_data(const BenchmarkReport& report, const std::string& metric) {
  if (metric != "seconds" && metric != "gflops" && metric != "gflops_per_watt") schema("unknown metric '" + metric + "'");
  std::ostringstream ss;
  ss << "label," << metric << "\n";
  for (const auto& r : report.rows) {
    if (metric == "seconds")
      ss << r.label << "," << num(r.seconds) << "\n";
    else if (metric == "gflops")
      ss << r.label << "," << num(r.gflops) << "\n";
    else if (r.gflops_per_watt)
      ss << r.label << "," << num(*r.gflops_per_watt) << "\n";
  }
  return ss.str();
}

}  // namespace streamgemm
