#pragma once

#include "vmem/core_types.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmem {

/// Input/output failure (unreadable file, malformed CSV).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace csv {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  }
}

/// Shortest "%.*g" rendering used by every CSV writer; deterministic.
inline std::string fmt(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace csv

/// A panel plus optional per-series multiplicative trend levels (T x K), as
/// written by the detrending step in `trend_<label>` columns.
struct PanelFile {
  Panel panel;
  std::optional<MatrixXd> trend;
};

/// Parses `date,<label1>,...,<labelK>,neg_return[,trend_<label>...]`.
inline PanelFile read_panel_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("panel CSV is empty");
  const auto header = csv::split(line);
  if (header.size() < 3 || header.front() != "date")
    throw IoError("panel CSV header must start with 'date' and name at least one series");
  std::size_t neg_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == "neg_return") neg_col = c;
  if (neg_col == header.size()) throw IoError("panel CSV header lacks a 'neg_return' column");

  PanelFile out;
  std::vector<std::size_t> value_cols;
  std::vector<std::size_t> trend_cols;
  for (std::size_t c = 1; c < neg_col; ++c) {
    out.panel.labels.push_back(header[c]);
    value_cols.push_back(c);
  }
  for (const auto& label : out.panel.labels) {
    for (std::size_t c = neg_col + 1; c < header.size(); ++c)
      if (header[c] == "trend_" + label) trend_cols.push_back(c);
  }
  const bool has_trend = !trend_cols.empty();
  if (has_trend && trend_cols.size() != value_cols.size())
    throw IoError("panel CSV has trend columns for only some series");

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> trend_rows;
  std::vector<double> signs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != header.size())
      throw IoError("line " + std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    out.panel.dates.push_back(cells[0]);
    std::vector<double> row;
    for (auto c : value_cols) row.push_back(csv::parse_double(cells[c], line_no));
    rows.push_back(std::move(row));
    signs.push_back(csv::parse_double(cells[neg_col], line_no));
    if (has_trend) {
      std::vector<double> tr;
      for (auto c : trend_cols) tr.push_back(csv::parse_double(cells[c], line_no));
      trend_rows.push_back(std::move(tr));
    }
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  const auto K = static_cast<Eigen::Index>(value_cols.size());
  out.panel.values.resize(T, K);
  out.panel.sign_indicator.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < K; ++i) out.panel.values(t, i) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
    out.panel.sign_indicator(t) = signs[static_cast<std::size_t>(t)];
  }
  if (has_trend) {
    MatrixXd tr(T, K);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < K; ++i) tr(t, i) = trend_rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
    out.trend = std::move(tr);
  }
  return out;
}

inline PanelFile read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open panel file '" + path + "'");
  return read_panel_csv(in);
}

inline void write_panel_csv(std::ostream& out, const Panel& panel,
                            const std::optional<MatrixXd>& trend = std::nullopt) {
  out << "date";
  for (const auto& l : panel.labels) out << ',' << l;
  out << ",neg_return";
  if (trend)
    for (const auto& l : panel.labels) out << ",trend_" << l;
  out << '\n';
  for (std::size_t t = 0; t < panel.T(); ++t) {
    const auto tt = static_cast<Eigen::Index>(t);
    out << panel.dates[t];
    for (Eigen::Index i = 0; i < panel.values.cols(); ++i) out << ',' << csv::fmt(panel.values(tt, i));
    out << ',' << static_cast<int>(panel.sign_indicator(tt));
    if (trend)
      for (Eigen::Index i = 0; i < trend->cols(); ++i) out << ',' << csv::fmt((*trend)(tt, i));
    out << '\n';
  }
}

inline void write_panel_csv(const std::string& path, const Panel& panel,
                            const std::optional<MatrixXd>& trend = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write panel file '" + path + "'");
  write_panel_csv(out, panel, trend);
}

}  // namespace vmem
