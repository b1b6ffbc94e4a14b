#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stagdid/error.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

// Maps CSV column names onto panel roles. Exactly one of `group` (first
// treatment period, 0 or blank = never treated) and `treatment` (0/1 indicator
// per row) identifies treatment timing.
struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "y";
  std::string group = "group";
  std::string treatment;
  std::string cluster;
  std::vector<std::string> covariates;
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

inline double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw Error("panel", "line " + std::to_string(line) + ": column '" + column + "' is not a number: '" + s + "'");
  return v;
}

inline std::int64_t parse_label(const std::string& s, std::size_t line, const std::string& column) {
  auto v = parse_integer(s);
  if (!v) {
    // Accept integral values written as floats, e.g. "2004.0".
    const double d = parse_double(s, line, column);
    if (d != std::floor(d))
      throw Error("panel", "line " + std::to_string(line) + ": column '" + column + "' must be an integer period");
    return static_cast<std::int64_t>(d);
  }
  return *v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Reads a long-format panel (one row per unit and period).
inline Panel ingest_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error("panel", "CSV input is empty");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("panel", "CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.group.empty() == schema.treatment.empty())
    throw Error("panel", "schema must name exactly one of a group column or a treatment column");
  const std::size_t c_unit = column(schema.unit);
  const std::size_t c_time = column(schema.time);
  const std::size_t c_y = column(schema.outcome);
  const std::optional<std::size_t> c_group =
      schema.group.empty() ? std::nullopt : std::optional(column(schema.group));
  const std::optional<std::size_t> c_treat =
      schema.treatment.empty() ? std::nullopt : std::optional(column(schema.treatment));
  const std::optional<std::size_t> c_cluster =
      schema.cluster.empty() ? std::nullopt : std::optional(column(schema.cluster));
  std::vector<std::size_t> c_cov;
  for (const auto& name : schema.covariates) c_cov.push_back(column(name));

  struct Row {
    std::int64_t time;
    double y;
    std::string group;
    double treated;
    std::string cluster;
    std::vector<double> x;
    std::size_t line;
  };
  std::map<std::string, std::vector<Row>> by_unit;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw Error("panel", "line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                               " fields, expected " + std::to_string(header.size()));
    Row row;
    row.line = line_no;
    row.time = detail::parse_label(f[c_time], line_no, schema.time);
    row.y = detail::parse_double(f[c_y], line_no, schema.outcome);
    row.group = c_group ? f[*c_group] : std::string();
    row.treated = c_treat ? detail::parse_double(f[*c_treat], line_no, schema.treatment) : 0.0;
    row.cluster = c_cluster ? f[*c_cluster] : std::string();
    for (std::size_t j = 0; j < c_cov.size(); ++j)
      row.x.push_back(detail::parse_double(f[c_cov[j]], line_no, schema.covariates[j]));
    const auto& unit = f[c_unit];
    if (unit.empty()) throw Error("panel", "line " + std::to_string(line_no) + " has an empty unit id");
    auto [it, inserted] = by_unit.try_emplace(unit);
    it->second.push_back(std::move(row));
  }
  if (by_unit.empty()) throw Error("panel", "CSV has no data rows");

  std::vector<std::int64_t> times;
  for (const auto& [unit, rows] : by_unit)
    for (const auto& r : rows) times.push_back(r.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const auto n_periods = static_cast<Eigen::Index>(times.size());
  std::unordered_map<std::int64_t, Eigen::Index> period_index;
  for (Eigen::Index t = 0; t < n_periods; ++t) period_index[times[static_cast<std::size_t>(t)]] = t;

  const auto n = static_cast<Eigen::Index>(by_unit.size());
  const auto k = static_cast<Eigen::Index>(c_cov.size());
  std::vector<std::string> ids;
  Eigen::MatrixXd y(n, n_periods);
  Eigen::MatrixXd x(n, k);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n_periods);
  std::vector<Cohort> cohorts(static_cast<std::size_t>(n));
  std::vector<std::string> clusters;
  std::vector<std::string> unbalanced;

  Eigen::Index i = 0;
  for (auto& [unit, rows] : by_unit) {
    ids.push_back(unit);
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (rows[r].time == rows[r - 1].time)
        throw Error("panel", "unit '" + unit + "' has more than one row for period " + std::to_string(rows[r].time));
    if (static_cast<Eigen::Index>(rows.size()) != n_periods) {
      unbalanced.push_back(unit);
      ++i;
      continue;
    }
    const Row& first = rows.front();
    for (const auto& r : rows) {
      const auto t = period_index.at(r.time);
      y(i, t) = r.y;
      d(i, t) = r.treated;
      for (Eigen::Index j = 0; j < k; ++j)
        if (r.x[static_cast<std::size_t>(j)] != first.x[static_cast<std::size_t>(j)])
          throw Error("panel", "covariate '" + schema.covariates[static_cast<std::size_t>(j)] + "' varies over time for unit '" +
                                   unit + "'; covariates must be time-invariant");
      if (r.group != first.group)
        throw Error("panel", "group column varies over time for unit '" + unit + "'");
      if (r.cluster != first.cluster)
        throw Error("panel", "cluster column varies over time for unit '" + unit + "'");
    }
    for (Eigen::Index j = 0; j < k; ++j) x(i, j) = first.x[static_cast<std::size_t>(j)];
    if (c_group) {
      if (!first.group.empty()) {
        const auto label = detail::parse_label(first.group, first.line, schema.group);
        if (label != 0) {
          auto it = period_index.find(label);
          if (it == period_index.end())
            throw Error("panel", "unit '" + unit + "' has first-treatment period " + std::to_string(label) +
                                     " which is not a period of the panel");
          cohorts[static_cast<std::size_t>(i)] = static_cast<int>(it->second) + 1;
        }
      }
    }
    if (c_cluster) clusters.push_back(first.cluster);
    ++i;
  }
  if (!unbalanced.empty()) {
    std::string list;
    for (std::size_t u = 0; u < unbalanced.size() && u < 10; ++u) list += (u ? ", " : "") + unbalanced[u];
    if (unbalanced.size() > 10) list += ", ...";
    throw Error("panel", "unbalanced panel: " + std::to_string(unbalanced.size()) +
                             " unit(s) are not observed in every period (" + list + ")");
  }
  if (c_treat) cohorts = first_treatment_from_indicators(d, ids);

  return Panel(std::move(ids), std::move(times), std::move(y), std::move(x), schema.covariates,
               std::move(cohorts), std::move(clusters));
}

inline Panel ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("panel", "cannot open '" + path + "'");
  return ingest_csv(in, schema);
}

// Writes the panel in long format with columns unit,time,y,group,cluster,<covariates>.
// Doubles use shortest round-trip formatting so re-ingestion is exact.
inline void write_csv(const Panel& panel, std::ostream& out) {
  out << "unit,time,y,group,cluster";
  for (const auto& name : panel.covariate_names()) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < panel.n_units(); ++i) {
    const auto& c = panel.cohort(i);
    const std::string group = c ? std::to_string(panel.time_label(*c)) : "0";
    for (int t = 1; t <= panel.n_periods(); ++t) {
      out << panel.unit_ids()[static_cast<std::size_t>(i)] << ',' << panel.time_label(t) << ','
          << detail::format_double(panel.outcome(i, t)) << ',' << group << ','
          << panel.cluster_labels()[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 1; j < panel.k(); ++j) out << ',' << detail::format_double(panel.covariates()(i, j));
      out << '\n';
    }
  }
}

inline CsvSchema written_schema(const Panel& panel) {
  CsvSchema schema;
  schema.unit = "unit";
  schema.time = "time";
  schema.outcome = "y";
  schema.group = "group";
  schema.cluster = "cluster";
  schema.covariates = panel.covariate_names();
  return schema;
}

inline void write_csv(const Panel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("panel", "cannot write '" + path + "'");
  write_csv(panel, out);
}

}  // namespace stagdid
