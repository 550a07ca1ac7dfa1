#pragma once

// Plain CSV input and output for event patterns, posterior summaries, chains
// and metric reports. Numbers are written with 17 significant digits so every
// double reads back exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lineqcox/cox_inference.hpp"
#include "lineqcox/errors.hpp"

namespace lineqcox::io {

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& text, std::size_t line) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size()) throw ParseError("not a number: '" + t + "'", line);
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot write " + path.string());
  return out;
}

/// Writes `obs,x1[,x2…]`, one event per row, obs 1-based.
inline void write_events(const std::filesystem::path& path, const PointPattern& pattern) {
  auto out = open_out(path);
  out << "obs";
  for (std::size_t d = 0; d < pattern.dim; ++d) out << ",x" << d + 1;
  out << '\n';
  for (std::size_t o = 0; o < pattern.observations.size(); ++o) {
    for (const auto& x : pattern.observations[o]) {
      out << o + 1;
      for (double v : x) out << ',' << format_number(v);
      out << '\n';
    }
  }
}

/// Reads an events file. The observation count is the larger of `min_observations`
/// and the highest index present, so trailing empty observations need the hint.
inline PointPattern read_events(const std::filesystem::path& path, std::size_t min_observations = 1) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open events file " + path.string(), 0);
  std::string line;
  std::size_t lineno = 0;
  PointPattern p;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  const auto header = split(trim(line));
  if (header.size() < 2 || trim(header[0]) != "obs") {
    throw ParseError("events header must be obs,x1[,x2...]", lineno == 0 ? 1 : lineno);
  }
  for (std::size_t d = 1; d < header.size(); ++d) {
    if (trim(header[d]) != "x" + std::to_string(d)) throw ParseError("unexpected column '" + header[d] + "'", lineno);
  }
  p.dim = header.size() - 1;
  p.observations.resize(min_observations);
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()),
                       lineno);
    }
    const double obs = parse_number(cells[0], lineno);
    if (obs < 1.0 || obs != std::floor(obs) || obs > 1e9) {
      throw ParseError("observation index must be a positive integer", lineno);
    }
    const auto o = static_cast<std::size_t>(obs);
    if (o > p.observations.size()) p.observations.resize(o);
    Point x(p.dim);
    for (std::size_t d = 0; d < p.dim; ++d) x[d] = parse_number(cells[d + 1], lineno);
    p.observations[o - 1].push_back(std::move(x));
  }
  return p;
}

inline void write_summary(const std::filesystem::path& path, const IntensitySummary& s) {
  auto out = open_out(path);
  const std::size_t dim = s.points.empty() ? 1 : s.points.front().size();
  for (std::size_t d = 0; d < dim; ++d) out << 'x' << d + 1 << ',';
  out << "mean";
  for (double q : s.levels) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "q%02d", static_cast<int>(std::lround(q * 100.0)));
    out << ',' << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    for (double v : s.points[i]) out << format_number(v) << ',';
    out << format_number(s.mean[i]);
    for (const auto& q : s.quantiles) out << ',' << format_number(q[i]);
    out << '\n';
  }
}

struct SummaryTable {
  std::vector<Point> points;
  std::vector<double> mean;
};

/// Reads the point coordinates and the mean column of a summary file.
inline SummaryTable read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open summary file " + path.string(), 0);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty summary file", 1);
  const auto header = split(trim(line));
  std::size_t mean_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) == "mean") mean_col = c;
  }
  if (mean_col == header.size() || mean_col == 0) throw ParseError("summary header lacks x columns or mean", 1);
  for (std::size_t c = 0; c < mean_col; ++c) {
    if (trim(header[c]) != "x" + std::to_string(c + 1)) throw ParseError("unexpected column '" + header[c] + "'", 1);
  }
  SummaryTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (cells.size() != header.size()) throw ParseError("wrong number of fields", lineno);
    Point x(mean_col);
    for (std::size_t c = 0; c < mean_col; ++c) x[c] = parse_number(cells[c], lineno);
    t.points.push_back(std::move(x));
    t.mean.push_back(parse_number(cells[mean_col], lineno));
  }
  return t;
}

inline void write_chain(const std::filesystem::path& path, const PosteriorChain& chain) {
  auto out = open_out(path);
  for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) out << (j ? "," : "") << "xi" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) out << (j ? "," : "") << format_number(chain.samples(i, j));
    out << '\n';
  }
}

/// Two-column key,value file.
inline void write_key_values(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& rows) {
  auto out = open_out(path);
  out << "key,value\n";
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
}

inline std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected key,value", lineno);
    rows.emplace_back(trim(line.substr(0, comma)), trim(line.substr(comma + 1)));
  }
  return rows;
}

}  // namespace lineqcox::io
