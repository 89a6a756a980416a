#pragma once

// CSV formats used by the command-line tool.
//
// covariates: header x1..xp, one numeric row per sample
// quantiles:  header q_<level>..., one non-decreasing row per sample
// points:     long format, header sample_id,value

#include <cstddef>
#include <string>
#include <vector>

#include "wdl/distributions.hpp"
#include "wdl/matrix.hpp"

namespace wdl::cli {

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Every cell must parse as a finite number; errors name the file and line.
NumericTable read_numeric_csv(const std::string& path);

Matrix read_covariates(const std::string& path);

struct QuantileTable {
  LevelGrid grid;
  std::vector<QuantileFunction> rows;
};
QuantileTable read_quantiles(const std::string& path);

// Samples are returned in order of sample_id, which must run 0..N-1.
std::vector<EmpiricalDistribution> read_points(const std::string& path);

// Shortest representation that parses back to the same double.
std::string format_number(double v);

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void header(const std::vector<std::string>& names);
  void row(const std::vector<double>& values);
  void raw_line(const std::string& line);
  void close();

 private:
  std::string path_;
  std::string buffer_;
};

std::vector<std::string> covariate_header(std::size_t dim);
std::vector<std::string> quantile_header(const LevelGrid& grid);

void write_covariates(const std::string& path, const Matrix& x);
void write_quantiles(const std::string& path, const LevelGrid& grid, const std::vector<QuantileFunction>& rows);

}  // namespace wdl::cli
