#pragma once

// Versioned CSV: an optional first line "#format_version=1", then a header
// row and decimal rows. Files without the version line are read as version 1.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "powerkan/error.hpp"
#include "powerkan/tensor.hpp"

namespace powerkan::csv {

inline constexpr int kFormatVersion = 1;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw InputError(where + ": '" + s + "' is not a number");
  return v;
}

inline Table read(std::istream& in, const std::string& name = "csv") {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string key = "#format_version=";
      if (line.rfind(key, 0) == 0) {
        const std::string v = line.substr(key.size());
        if (v != std::to_string(kFormatVersion)) {
          throw InputError(name + ": unsupported format_version " + v);
        }
      }
      continue;
    }
    const auto cells = split(line);
    if (!header_seen) {
      t.header = cells;
      header_seen = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw InputError(name + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " fields, header has " + std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      row.push_back(parse_double(cells[c], name + ": line " + std::to_string(line_no) + ", column '" +
                                                t.header[c] + "'"));
    }
    t.rows.push_back(std::move(row));
  }
  if (!header_seen) throw InputError(name + ": missing header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path + "'");
  return read(in, path);
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write(std::ostream& out, const Table& t) {
  out << "#format_version=" << kFormatVersion << "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
}

inline void write_file(const std::string& path, const Table& t) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  write(out, t);
}

/// Split a table whose last column is the target into inputs and targets.
inline std::pair<Tensor, Tensor> to_xy(const Table& t) {
  if (t.header.size() < 2) throw InputError("dataset needs at least one input column and a target column");
  const std::size_t n = t.header.size() - 1;
  Tensor x(t.rows.size(), n), y(t.rows.size(), 1);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < n; ++c) x(r, c) = t.rows[r][c];
    y(r, 0) = t.rows[r][n];
  }
  return {std::move(x), std::move(y)};
}

inline Table from_xy(const Tensor& x, const Tensor& y) {
  Table t;
  for (std::size_t c = 0; c < x.cols(); ++c) t.header.push_back("x" + std::to_string(c + 1));
  t.header.emplace_back("y");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> row(x.row(r).begin(), x.row(r).end());
    row.push_back(y(r, 0));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace powerkan::csv
