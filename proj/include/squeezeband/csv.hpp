#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "squeezeband/common.hpp"

// CSV emission with shortest round-trip float formatting, comma separators,
// one header row and LF line endings, so regenerated datasets diff bit-exact.

namespace squeezeband {

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

using Cell = std::variant<double, std::int64_t, std::string>;

struct Dataset {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row) {
    if (row.size() != header.size())
      throw validation_error("dataset '" + name + "': row width " +
                             std::to_string(row.size()) + " != header width " +
                             std::to_string(header.size()));
    rows.push_back(std::move(row));
  }
};

inline std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t i = 0; i < ds.header.size(); ++i) {
    if (i) out += ',';
    out += ds.header[i];
  }
  out += '\n';
  for (const auto& row : ds.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (std::holds_alternative<double>(row[i]))
        out += format_double(std::get<double>(row[i]));
      else if (std::holds_alternative<std::int64_t>(row[i]))
        out += std::to_string(std::get<std::int64_t>(row[i]));
      else
        out += std::get<std::string>(row[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace squeezeband
