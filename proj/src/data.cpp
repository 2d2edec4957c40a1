#include "mixfit/data.hpp"

#include <fstream>
#include <sstream>

#include "mixfit/error.hpp"
#include "mixfit/format.hpp"

namespace mixfit {

DataSet read_data(std::istream& in) {
  DataSet data{0, {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::string tok;
    std::size_t count = 0;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        data.values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
      ++count;
    }
    if (data.dim == 0) data.dim = count;
    if (count != data.dim)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected " +
                                             std::to_string(data.dim) + " coordinates");
  }
  if (data.dim == 0) data.dim = 1;
  return data;
}

DataSet read_data_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_data(in);
}

void write_data(std::ostream& out, const DataSet& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.at(i);
    for (std::size_t c = 0; c < x.size(); ++c) {
      if (c) out << ' ';
      out << format_exact(x[c]);
    }
    out << '\n';
  }
}

void write_data_file(const std::string& path, const DataSet& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_data(out, data);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace mixfit
