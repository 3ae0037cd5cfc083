#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fmgl_cli {

enum ExitCode { kOk = 0, kParameter = 1, kData = 2, kNumerical = 3, kInternal = 4 };

struct CliError : std::runtime_error {
  CliError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

/// Dense row-major table.
struct Table {
  long rows = 0;
  long cols = 0;
  std::vector<double> values;
};

/// Comma separated numbers, one row per line. Blank lines and lines starting
/// with '#' are skipped.
Table read_csv(const std::string& path);
void write_csv(const std::string& path, const Table& table);

/// Symmetric Matrix Market coordinate file, index base 1, lower triangle.
/// Returns the full matrix in column-major order.
std::vector<double> read_matrix_market(const std::string& path, int& p);
/// Writes every nonzero of the lower triangle (diagonal included).
void write_matrix_market(const std::string& path, const double* col_major, int p);

std::string format_double(double x);  // 17 significant digits

void write_text(const std::string& path, const std::string& text);

}  // namespace fmgl_cli
