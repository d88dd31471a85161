#include "tora/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <tuple>

#include "tora/error.hpp"

namespace tora::io {
namespace {

auto entry_key(const MetricEntry& entry) {
  return std::tie(entry.timestep, entry.block, entry.metric);
}

std::string quoted(const std::string& text) { return nlohmann::json(text).dump(); }

std::string render_json(const MetricReport& report) {
  // Keys are emitted in sorted order by hand so the float formatting stays ours.
  std::ostringstream out;
  out << "{\n  \"entries\": [";
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& entry = report.entries[i];
    out << (i == 0 ? "\n" : ",\n");
    out << "    {\"block\": " << entry.block << ", \"metric\": " << quoted(entry.metric)
        << ", \"timestep\": " << entry.timestep << ", \"value\": " << format_double(entry.value)
        << "}";
  }
  out << (report.entries.empty() ? "],\n" : "\n  ],\n");
  out << "  \"metadata\": {\n    \"config\": {";
  bool first = true;
  for (const auto& [key, value] : report.metadata.config) {
    out << (first ? "\n" : ",\n") << "      " << quoted(key) << ": " << quoted(value);
    first = false;
  }
  out << (first ? "},\n" : "\n    },\n");
  out << "    \"input_digest\": " << quoted(report.metadata.input_digest) << ",\n";
  out << "    \"seed\": " << report.metadata.seed << "\n  }\n}\n";
  return out.str();
}

std::string render_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "# seed=" << report.metadata.seed << "\n";
  out << "# input_digest=" << report.metadata.input_digest << "\n";
  for (const auto& [key, value] : report.metadata.config) {
    out << "# config." << key << "=" << value << "\n";
  }
  out << "timestep,block,metric,value\n";
  for (const auto& entry : report.entries) {
    out << entry.timestep << ',' << entry.block << ',' << entry.metric << ','
        << format_double(entry.value) << "\n";
  }
  return out.str();
}

}  // namespace

void MetricReport::add(int timestep, int block, std::string metric, double value) {
  entries.push_back({timestep, block, std::move(metric), value});
}

void MetricReport::sort() {
  std::stable_sort(entries.begin(), entries.end(), [](const MetricEntry& a, const MetricEntry& b) {
    return entry_key(a) < entry_key(b);
  });
}

void MetricReport::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& entry = entries[i];
    if (!std::isfinite(entry.value)) {
      fail(ErrorCode::kValidation, "non-finite value for metric '" + entry.metric + "' at (t=" +
                                       std::to_string(entry.timestep) +
                                       ", b=" + std::to_string(entry.block) + ")");
    }
    if (entry.metric.find_first_of(",\n\"") != std::string::npos) {
      fail(ErrorCode::kValidation, "metric name contains a reserved character: " + entry.metric);
    }
    if (i > 0 && entry_key(entry) < entry_key(entries[i - 1])) {
      fail(ErrorCode::kValidation, "report entries are not in (timestep, block, metric) order");
    }
  }
}

std::optional<double> MetricReport::find(int timestep, int block, const std::string& metric) const {
  for (const auto& entry : entries) {
    if (entry.timestep == timestep && entry.block == block && entry.metric == metric) {
      return entry.value;
    }
  }
  return std::nullopt;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  fail(ErrorCode::kConfig, "unknown report format '" + name + "'");
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string render_report(const MetricReport& report, ReportFormat format) {
  MetricReport ordered = report;
  ordered.sort();
  ordered.validate();
  return format == ReportFormat::kJson ? render_json(ordered) : render_csv(ordered);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

void write_report(const std::filesystem::path& path, const MetricReport& report,
                  ReportFormat format) {
  write_text(path, render_report(report, format));
}

}  // namespace tora::io
