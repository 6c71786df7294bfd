#include "csr/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include <unistd.h>

namespace csr {

std::string format_number(double value) {
  if (std::isnan(value)) return {};
  if (value == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", value);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void Table::add_row(std::vector<double> values) {
  if (values.size() != columns.size())
    throw std::invalid_argument("table " + name + ": row has " + std::to_string(values.size()) +
                                " values, expected " + std::to_string(columns.size()));
  rows.push_back(std::move(values));
}

std::string Table::to_csv() const {
  std::string text;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) text += ',';
    text += csv_escape(columns[i]);
  }
  text += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ',';
      text += format_number(row[i]);
    }
    text += '\n';
  }
  return text;
}

nlohmann::json Table::to_json() const {
  nlohmann::json out;
  out["columns"] = columns;
  auto& data = out["rows"] = nlohmann::json::array();
  for (const auto& row : rows) {
    auto& r = data.emplace_back(nlohmann::json::array());
    for (double v : row) r.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                             ec.message());
  }
}

Table trajectory_table(const Trajectory& traj, const std::string& name) {
  const int n_atoms = traj.n_atoms();
  const bool cascade = traj.kind == ModelKind::cascade;
  Table table(name, {"t", "conservation", "absorbed"});
  const std::vector<std::pair<const Eigen::MatrixXd*, std::string>> blocks =
      cascade ? std::vector<std::pair<const Eigen::MatrixXd*, std::string>>{
                    {&traj.upper_marginal, "upper_"},
                    {&traj.intermediate_marginal, "intermediate_"},
                    {&traj.lower_marginal, "lower_"}}
              : std::vector<std::pair<const Eigen::MatrixXd*, std::string>>{
                    {&traj.upper_marginal, "p_"}};
  for (const auto& [m, prefix] : blocks)
    for (int k = 0; k <= n_atoms; ++k) table.columns.push_back(prefix + std::to_string(k));

  for (std::size_t j = 0; j < traj.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    std::vector<double> values{traj.times[j], traj.conservation[j], traj.absorbed[j]};
    for (const auto& [m, prefix] : blocks)
      for (int k = 0; k <= n_atoms; ++k) values.push_back((*m)(k, col));
    table.add_row(std::move(values));
  }
  return table;
}

Table event_log_table(const TrialEnsemble& ensemble, const std::string& name) {
  if (ensemble.event_logs.size() != ensemble.trials.size())
    throw std::invalid_argument("event_log_table: ensemble was sampled without event logs");
  Table table(name, {"trial", "event_index", "time", "mode"});
  for (std::size_t trial = 0; trial < ensemble.event_logs.size(); ++trial) {
    const auto& events = ensemble.event_logs[trial];
    for (std::size_t e = 0; e < events.size(); ++e)
      table.add_row({static_cast<double>(trial + 1), static_cast<double>(e + 1), events[e].time,
                     events[e].transition == Transition::upper ? 1.0 : 2.0});
  }
  return table;
}

}  // namespace csr
