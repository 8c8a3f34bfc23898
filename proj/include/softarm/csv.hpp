#pragma once

// Minimal comma-separated table I/O: one header line, numeric cells.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "softarm/common.hpp"

namespace softarm {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw InvalidArgument("csv: no column named '" + name + "'");
  }

  std::vector<double> values(const std::string& name) const {
    const int c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[static_cast<std::size_t>(c)]);
    return out;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  while (std::getline(f, line)) {
    if (!detail::trim(line).empty() && line[0] != '#') break;
  }
  t.header = detail::split_csv_line(line);
  require(!t.header.empty(), "csv: missing header in " + path);
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (detail::trim(line).empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == t.header.size(),
            "csv: " + path + " line " + std::to_string(lineno) + " has the wrong number of cells");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw InvalidArgument("csv: " + path + " line " + std::to_string(lineno) +
                              ": not a number '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Two-column numeric file (any header names): the format accepted for
/// externally recorded traces.
inline std::vector<std::pair<double, double>> read_two_column_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  require(t.header.size() == 2, "csv: expected exactly two columns in " + path);
  std::vector<std::pair<double, double>> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.emplace_back(r[0], r[1]);
  return out;
}

inline void write_two_column_csv(const std::vector<std::pair<double, double>>& data,
                                 const std::string& path, const std::string& a,
                                 const std::string& b) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.precision(12);
  f << a << ',' << b << '\n';
  for (const auto& [x, y] : data) f << x << ',' << y << '\n';
}

}  // namespace softarm
