#pragma once

#include "tdflow/config.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tdflow {

/// 16 hex digits of FNV-1a 64 over `text`.
std::string content_hash(const std::string& text);

/// Library version baked in at build time.
std::string code_version();

/// Current UTC time as ISO 8601 with seconds.
std::string utc_timestamp();

/// Writes through a temporary file in the same directory, then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string code_version;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;  // empty while the run is in progress
  std::string status = "running";
  std::map<std::string, std::string> artifacts;  // name -> path relative to the run directory

  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// Creates `<root>/<run_id>`, appending -2, -3, ... when that directory already exists.
std::filesystem::path create_run_dir(const std::filesystem::path& root, const std::string& run_id);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path, int every = 1);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header; throws ConfigError when missing.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// SVG chart of columns `spec.y` against `spec.x`. Line charts draw one polyline per
/// series; bar charts draw grouped bars per x value. Series split by `spec.group` when set.
std::string render_svg(const CsvTable& table, const PlotSection& spec);

}  // namespace tdflow
