#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace auxetic::csv {

/// Numeric table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws Error(Io) when absent.
  std::size_t column(std::string_view name) const;
};

/// Parses comma-separated numeric rows; blank lines are skipped.
Table read(std::istream& is);

/// Shortest text that round-trips the double exactly ("%.17g" fallback).
std::string format(double v);

}  // namespace auxetic::csv
