#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "arbor/model.hpp"

namespace arbor {

/// Tabular feature data. Cells are doubles with NaN marking a missing cell.
/// Labels and timestamps start out as ordinary columns and are pulled out by
/// name (see take_column), so they always stay row-aligned.
struct Dataset {
  std::vector<std::string> column_names;
  std::size_t num_rows = 0;
  std::size_t num_cols = 0;
  std::vector<double> cells;       // row-major, num_rows * num_cols
  std::vector<double> labels;      // empty when absent, else one per row
  std::vector<double> timestamps;  // empty when absent, else one per row

  bool has_labels() const { return !labels.empty(); }
  bool has_timestamps() const { return !timestamps.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {cells.data() + i * num_cols, num_cols};
  }
  double at(std::size_t i, std::size_t j) const { return cells[i * num_cols + j]; }
  double& at(std::size_t i, std::size_t j) { return cells[i * num_cols + j]; }

  int column_index(const std::string& name) const {
    for (std::size_t j = 0; j < column_names.size(); ++j)
      if (column_names[j] == name) return static_cast<int>(j);
    return -1;
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(num_rows);
    for (std::size_t i = 0; i < num_rows; ++i) out[i] = at(i, j);
    return out;
  }

  /// Removes the named column from the matrix and returns its values.
  std::vector<double> take_column(const std::string& name) {
    const int j = column_index(name);
    if (j < 0) throw validation_error("dataset has no column named '" + name + "'");
    std::vector<double> out = column(static_cast<std::size_t>(j));
    std::vector<double> rest;
    rest.reserve(num_rows * (num_cols - 1));
    for (std::size_t i = 0; i < num_rows; ++i)
      for (std::size_t c = 0; c < num_cols; ++c)
        if (c != static_cast<std::size_t>(j)) rest.push_back(at(i, c));
    cells = std::move(rest);
    column_names.erase(column_names.begin() + j);
    --num_cols;
    return out;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  if (cell.empty()) return missing_value();
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw parse_error("csv row " + std::to_string(row) + " column '" + col +
                      "': cannot parse '" + cell + "' as a number");
  return v;
}

}  // namespace detail

inline Dataset read_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw parse_error("csv: empty document (no header row)");
  ds.column_names = detail::split_csv_line(line);
  if (ds.column_names.empty()) throw parse_error("csv: header row has no columns");
  ds.num_cols = ds.column_names.size();

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != ds.num_cols)
      throw parse_error("csv row " + std::to_string(row) + ": has " +
                        std::to_string(fields.size()) + " cells, expected " +
                        std::to_string(ds.num_cols));
    for (std::size_t j = 0; j < fields.size(); ++j)
      ds.cells.push_back(detail::parse_cell(fields[j], row, ds.column_names[j]));
    ++ds.num_rows;
  }
  return ds;
}

inline Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open '" + path + "'");
  return read_csv(in);
}

// Shortest round-trip formatting so identical runs produce identical bytes.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline void write_csv_row(std::ostream& out, std::span<const double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j) out << ',';
    out << format_double(row[j]);
  }
  out << '\n';
}

inline void write_csv_header(std::ostream& out, const std::vector<std::string>& names) {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j) out << ',';
    out << names[j];
  }
  out << '\n';
}

}  // namespace arbor
