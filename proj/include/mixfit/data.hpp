#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mixfit {

// n observations in R^d, row-major.
struct DataSet {
  std::size_t dim = 1;
  std::vector<double> values;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  bool empty() const { return values.empty(); }
  std::span<const double> at(std::size_t i) const { return {values.data() + i * dim, dim}; }

  static DataSet univariate(std::vector<double> xs) { return DataSet{1, std::move(xs)}; }
};

/// One observation per line, whitespace-separated coordinates. Blank and `#` lines skipped.
DataSet read_data(std::istream& in);
DataSet read_data_file(const std::string& path);
void write_data(std::ostream& out, const DataSet& data);
void write_data_file(const std::string& path, const DataSet& data);

}  // namespace mixfit
