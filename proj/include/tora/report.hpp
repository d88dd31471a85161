#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tora::io {

struct MetricEntry {
  int timestep = 0;
  int block = 0;
  std::string metric;
  double value = 0.0;
};

struct ReportMetadata {
  std::map<std::string, std::string> config;  // echo of the run configuration
  std::uint64_t seed = 0;
  std::string input_digest;
};

/// Per-(timestep, block) scalar metrics plus run metadata.
struct MetricReport {
  std::vector<MetricEntry> entries;
  ReportMetadata metadata;

  void add(int timestep, int block, std::string metric, double value);

  /// Stable sort by (timestep, block, metric).
  void sort();

  /// Throws validation_error on non-finite values or out-of-order entries.
  void validate() const;

  std::optional<double> find(int timestep, int block, const std::string& metric) const;
};

enum class ReportFormat { kJson, kCsv };

ReportFormat parse_report_format(const std::string& name);

/// Formats a double with 17 significant digits (round-trippable).
std::string format_double(double value);

/// Deterministic rendering: sorted JSON keys, entries in lexicographic order.
std::string render_report(const MetricReport& report, ReportFormat format);

void write_report(const std::filesystem::path& path, const MetricReport& report,
                  ReportFormat format);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace tora::io
