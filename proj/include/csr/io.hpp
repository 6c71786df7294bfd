#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/evolver.hpp"
#include "csr/oracle.hpp"

namespace csr {

/// Fixed "%.15g" rendering; NaN becomes an empty field, -0 becomes 0. The
/// output depends only on the value, so equal runs give equal bytes.
std::string format_number(double value);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_escape(const std::string& field);

/// A named numeric table, serialized as CSV (header row, '.' decimal point)
/// or as JSON {"columns": [...], "rows": [[...], ...]}.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  Table() = default;
  Table(std::string table_name, std::vector<std::string> column_names)
      : name(std::move(table_name)), columns(std::move(column_names)) {}

  /// Throws std::invalid_argument on a width mismatch.
  void add_row(std::vector<double> values);
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Writes to a temporary sibling, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// `t,conservation,absorbed,<marginal columns>`; two-level runs carry p_0..p_N,
/// cascade runs the upper, intermediate and lower occupation marginals.
Table trajectory_table(const Trajectory& traj, const std::string& name = "trajectory");

/// `trial,event_index,time,mode` with mode 1 (upper) or 2 (lower); trials and
/// events are numbered from 1. Needs an ensemble sampled with event logs.
Table event_log_table(const TrialEnsemble& ensemble, const std::string& name = "oracle_events");

}  // namespace csr
