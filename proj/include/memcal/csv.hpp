#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memcal::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line number in the source
};

struct Table {
  std::string source;  // file name used in error messages
  std::vector<std::string> header;
  std::vector<Row> rows;
};

/// RFC 4180 style parsing: comma separated, optional double quotes with ""
/// escapes, blank lines skipped. Throws ArgumentError naming source and line.
Table parse(std::string_view text, const std::string& source);
Table read_file(const std::string& path);

/// Parses a finite double; on failure throws ArgumentError naming
/// source:line:column and the offending text.
double to_double(const Table& table, const Row& row, std::size_t column);
long long to_integer(const Table& table, const Row& row, std::size_t column);

/// 17 significant digits, so values round-trip exactly.
std::string format(double value);

/// Quotes a field when it contains a comma, quote or newline.
std::string quote(const std::string& field);

std::string join(const std::vector<std::string>& fields);

}  // namespace memcal::csv
