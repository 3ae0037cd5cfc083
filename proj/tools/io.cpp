#include "io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fmgl_cli {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kData, "cannot open " + path);
  return in;
}

double parse_number(const std::string& token, const std::string& path, long line) {
  const char* begin = token.c_str();
  while (*begin == ' ' || *begin == '\t') ++begin;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == begin || (end && *end != '\0') || errno == ERANGE)
    throw CliError(kData, path + ":" + std::to_string(line) + ": bad number '" + token + "'");
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Table read_csv(const std::string& path) {
  auto in = open_input(path);
  Table t;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    long cols = 0;
    while (std::getline(ss, cell, ',')) {
      t.values.push_back(parse_number(cell, path, line_no));
      ++cols;
    }
    if (t.rows == 0)
      t.cols = cols;
    else if (cols != t.cols)
      throw CliError(kData, path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(t.cols) + " columns, found " + std::to_string(cols));
    ++t.rows;
  }
  if (t.rows == 0) throw CliError(kData, path + ": no data rows");
  return t;
}

void write_csv(const std::string& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw CliError(kData, "cannot write " + path);
  for (long r = 0; r < table.rows; ++r) {
    for (long c = 0; c < table.cols; ++c) {
      if (c) out << ',';
      out << format_double(table.values[static_cast<std::size_t>(r * table.cols + c)]);
    }
    out << '\n';
  }
  if (!out) throw CliError(kData, "write failed: " + path);
}

std::vector<double> read_matrix_market(const std::string& path, int& p) {
  auto in = open_input(path);
  std::string line;
  long line_no = 1;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0)
    throw CliError(kData, path + ": missing %%MatrixMarket header");
  std::string banner, object, format, field, symmetry;
  std::istringstream(line) >> banner >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate" || field != "real" || symmetry != "symmetric")
    throw CliError(kData, path + ": expected 'matrix coordinate real symmetric'");
  long rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream(line) >> rows >> cols >> nnz;
    break;
  }
  if (rows <= 0 || rows != cols || nnz < 0)
    throw CliError(kData, path + ": bad size line");
  p = static_cast<int>(rows);
  std::vector<double> m(static_cast<std::size_t>(rows * rows), 0.0);
  long seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    long i = 0, j = 0;
    std::string value;
    if (!(ss >> i >> j >> value) || i < 1 || j < 1 || i > rows || j > rows || i < j)
      throw CliError(kData, path + ":" + std::to_string(line_no) + ": bad entry");
    const double v = parse_number(value, path, line_no);
    m[static_cast<std::size_t>((j - 1) * rows + (i - 1))] = v;
    m[static_cast<std::size_t>((i - 1) * rows + (j - 1))] = v;
    ++seen;
  }
  if (seen != nnz)
    throw CliError(kData, path + ": expected " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
  return m;
}

void write_matrix_market(const std::string& path, const double* col_major, int p) {
  std::ostringstream body;
  long nnz = 0;
  for (int j = 0; j < p; ++j) {
    for (int i = j; i < p; ++i) {
      const double v = col_major[static_cast<std::size_t>(j) * static_cast<std::size_t>(p) + static_cast<std::size_t>(i)];
      if (v == 0.0) continue;
      body << (i + 1) << ' ' << (j + 1) << ' ' << format_double(v) << '\n';
      ++nnz;
    }
  }
  std::ofstream out(path);
  if (!out) throw CliError(kData, "cannot write " + path);
  out << "%%MatrixMarket matrix coordinate real symmetric\n"
      << p << ' ' << p << ' ' << nnz << '\n'
      << body.str();
  if (!out) throw CliError(kData, "write failed: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw CliError(kData, "cannot write " + path);
  out << text;
  if (!out) throw CliError(kData, "write failed: " + path);
}

}  // namespace fmgl_cli
