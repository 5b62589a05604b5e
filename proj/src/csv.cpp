#include "caref/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace caref {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& os, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) os << ',';
    os << csv_escape(fields[i]);
  }
  os << '\n';
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError(-1, "cannot open CSV file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any_field = false;
  int lineno = 1;
  int record_line = 1;

  const auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    any_field = true;
  };
  const auto end_record = [&] {
    if (!any_field && record.empty() && field.empty()) return;  // blank line
    end_field();
    if (table.header.empty() && table.rows.empty()) {
      table.header = std::move(record);
    } else {
      if (record.size() != table.header.size()) {
        throw CsvError(record_line,
                       "line " + std::to_string(record_line) + ": expected " +
                           std::to_string(table.header.size()) + " fields, got " +
                           std::to_string(record.size()));
      }
      table.rows.push_back(std::move(record));
    }
    record.clear();
    any_field = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++lineno;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++lineno;
        record_line = lineno;
        break;
      default:
        field += c;
    }
  }
  if (quoted) throw CsvError(record_line, "unterminated quoted field at line " +
                                              std::to_string(record_line));
  if (any_field || !field.empty()) end_record();
  if (table.header.empty()) throw CsvError(-1, "empty CSV file " + path.string());
  return table;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) {
    throw std::invalid_argument("parse_double: not a number: '" + s + "'");
  }
  return x;
}

}  // namespace caref
