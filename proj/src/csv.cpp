#include "auxetic/csv.hpp"

#include <charconv>
#include <istream>
#include <sstream>
#include <system_error>

#include "auxetic/errors.hpp"

namespace auxetic::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorKind::Io, "missing CSV column '" + std::string(name) + "'");
}

Table read(std::istream& is) {
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::Io, "empty CSV input");
  t.header = split_line(line);
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw Error(ErrorKind::Io, "CSV line " + std::to_string(line_no) + " has " +
                                     std::to_string(cells.size()) + " fields, expected " +
                                     std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw Error(ErrorKind::Io, "non-numeric CSV field '" + c + "' on line " + std::to_string(line_no));
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string format(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace auxetic::csv
