#pragma once

// CSV dataset files: header "f1,...,fd[,label]", one observation per row,
// reals written with 17 significant digits, integer labels.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shmbayes/data/dataset.hpp"

namespace shmbayes::datagen {

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& path, std::size_t line, const std::string& msg)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void save_csv(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << (j ? "," : "") << 'f' << (j + 1);
  if (ds.labelled()) out << ",label";
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << (j ? "," : "") << format_real(ds.X(i, j));
    if (ds.labelled()) out << ',' << ds.y[static_cast<std::size_t>(i)];
    out << '\n';
  }
}

/// Loads a dataset; the label column is optional and detected from the header.
inline LabeledDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw CsvError(path, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  const bool labelled = !header.empty() && header.back() == "label";
  const std::size_t d = header.size() - (labelled ? 1 : 0);
  if (d == 0) throw CsvError(path, 1, "header declares no features");
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "f" + std::to_string(j + 1)) throw CsvError(path, 1, "unexpected header column '" + header[j] + "'");
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw CsvError(path, lineno, "expected " + std::to_string(header.size()) + " columns, found " +
                                       std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const char* s = cells[j].c_str();
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(s, &end);
      if (end == s || *end != '\0' || errno == ERANGE) throw CsvError(path, lineno, "malformed number '" + cells[j] + "'");
      values.push_back(v);
    }
    if (labelled) {
      const char* s = cells.back().c_str();
      char* end = nullptr;
      const long v = std::strtol(s, &end, 10);
      if (end == s || *end != '\0') throw CsvError(path, lineno, "malformed label '" + cells.back() + "'");
      labels.push_back(static_cast<int>(v));
    }
  }

  LabeledDataset ds;
  const auto n = static_cast<Eigen::Index>(values.size() / d);
  ds.X.resize(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j)
      ds.X(i, j) = values[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)];
  ds.y = std::move(labels);
  return ds;
}

}  // namespace shmbayes::datagen
