#include "memcal/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "memcal/errors.hpp"

namespace memcal::csv {

namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Table parse(std::string_view text, const std::string& source) {
  Table table;
  table.source = source;
  std::vector<Row> rows;
  Row current;
  std::string field;
  bool in_quotes = false;
  bool quoted = false;
  bool row_has_content = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&]() {
    current.fields.push_back(quoted ? field : trim(field));
    field.clear();
    quoted = false;
  };
  auto end_row = [&]() {
    if (row_has_content || !current.fields.empty()) {
      end_field();
      rows.push_back(std::move(current));
    }
    current = Row{};
    field.clear();
    quoted = false;
    row_has_content = false;
  };

  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!trim(field).empty()) throw ArgumentError(where(source, line) + ": unexpected quote inside a field");
        field.clear();
        in_quotes = true;
        quoted = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\n':
        end_row();
        ++line;
        current.line = line;
        break;
      case '\r':
        break;
      default:
        if (c != ' ' && c != '\t') row_has_content = true;
        field.push_back(c);
    }
  }
  if (in_quotes) throw ArgumentError(where(source, line) + ": unterminated quoted field");
  end_row();

  if (rows.empty()) throw ArgumentError(source + ": file is empty (expected a header row)");
  table.header = std::move(rows.front().fields);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].fields.size() != table.header.size()) {
      throw ArgumentError(where(source, rows[r].line) + ": expected " + std::to_string(table.header.size()) +
                          " fields but found " + std::to_string(rows[r].fields.size()));
    }
    table.rows.push_back(std::move(rows[r]));
  }
  return table;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError(path + ": cannot open file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

double to_double(const Table& table, const Row& row, std::size_t column) {
  const std::string& text = row.fields.at(column);
  double value = 0.0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ArgumentError(where(table.source, row.line) + ":" + std::to_string(column + 1) + ": column '" +
                        table.header.at(column) + "' expects a finite number, got '" + text + "'");
  }
  return value;
}

long long to_integer(const Table& table, const Row& row, std::size_t column) {
  const std::string& text = row.fields.at(column);
  long long value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ArgumentError(where(table.source, row.line) + ":" + std::to_string(column + 1) + ": column '" +
                        table.header.at(column) + "' expects an integer, got '" + text + "'");
  }
  return value;
}

std::string format(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  if (ec != std::errc()) throw ArgumentError("cannot format number");
  return std::string(buf, ptr);
}

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(fields[i]);
  }
  return out;
}

}  // namespace memcal::csv
