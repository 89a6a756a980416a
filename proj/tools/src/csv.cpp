#include "csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "wdl/errors.hpp"

namespace wdl::cli {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || cell.empty()) {
    throw InvalidInputError(where + ": cannot parse '" + cell + "' as a number");
  }
  if (!std::isfinite(v)) throw InvalidInputError(where + ": non-finite value '" + cell + "'");
  return v;
}

}  // namespace

NumericTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open " + path);
  NumericTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    for (auto& c : cells) c = trim(c);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != table.header.size()) {
      throw InvalidInputError(where + ": expected " + std::to_string(table.header.size()) + " cells, found " +
                              std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, where));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw InvalidInputError(path + ": missing header line");
  return table;
}

Matrix read_covariates(const std::string& path) {
  NumericTable t = read_numeric_csv(path);
  if (t.header.empty()) throw InvalidInputError(path + ": no covariate columns");
  std::vector<double> data;
  data.reserve(t.rows.size() * t.header.size());
  for (const auto& r : t.rows) data.insert(data.end(), r.begin(), r.end());
  return Matrix(t.rows.size(), t.header.size(), std::move(data));
}

QuantileTable read_quantiles(const std::string& path) {
  NumericTable t = read_numeric_csv(path);
  std::vector<double> levels;
  for (const auto& name : t.header) {
    if (name.rfind("q_", 0) != 0) throw InvalidInputError(path + ": quantile column '" + name + "' must be named q_<level>");
    levels.push_back(parse_cell(name.substr(2), path + ":1"));
  }
  LevelGrid grid = [&] {
    try {
      return LevelGrid(levels);
    } catch (const InvalidInputError& e) {
      throw InvalidInputError(path + ":1: " + e.what());
    }
  }();
  QuantileTable out{grid, {}};
  out.rows.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    try {
      out.rows.emplace_back(grid, t.rows[i]);
    } catch (const InvalidInputError& e) {
      throw InvalidInputError(path + ": data row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<EmpiricalDistribution> read_points(const std::string& path) {
  NumericTable t = read_numeric_csv(path);
  if (t.header.size() != 2) throw InvalidInputError(path + ": expected columns sample_id,value");
  std::map<long long, std::vector<double>> grouped;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double id = t.rows[i][0];
    if (id != std::floor(id) || id < 0) {
      throw InvalidInputError(path + ": data row " + std::to_string(i + 1) + ": sample_id must be a non-negative integer");
    }
    grouped[static_cast<long long>(id)].push_back(t.rows[i][1]);
  }
  std::vector<EmpiricalDistribution> out;
  long long expected = 0;
  for (auto& [id, values] : grouped) {
    if (id != expected) throw InvalidInputError(path + ": sample_id " + std::to_string(expected) + " has no points");
    try {
      out.emplace_back(std::move(values));
    } catch (const InvalidInputError& e) {
      throw InvalidInputError(path + ": sample_id " + std::to_string(id) + ": " + e.what());
    }
    ++expected;
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericalError("cannot format number");
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(const std::string& path) : path_(path) {}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += names[i];
  }
  buffer_ += '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += format_number(values[i]);
  }
  buffer_ += '\n';
}

void CsvWriter::raw_line(const std::string& line) {
  buffer_ += line;
  buffer_ += '\n';
}

void CsvWriter::close() {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInputError("cannot write " + path_);
  out << buffer_;
  if (!out) throw InvalidInputError("failed writing " + path_);
}

std::vector<std::string> covariate_header(std::size_t dim) {
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= dim; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

std::vector<std::string> quantile_header(const LevelGrid& grid) {
  std::vector<std::string> names;
  for (double s : grid.levels()) names.push_back("q_" + format_number(s));
  return names;
}

void write_covariates(const std::string& path, const Matrix& x) {
  CsvWriter w(path);
  w.header(covariate_header(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i) w.row({x.row(i).begin(), x.row(i).end()});
  w.close();
}

void write_quantiles(const std::string& path, const LevelGrid& grid, const std::vector<QuantileFunction>& rows) {
  CsvWriter w(path);
  w.header(quantile_header(grid));
  for (const auto& q : rows) w.row({q.values().begin(), q.values().end()});
  w.close();
}

}  // namespace wdl::cli
