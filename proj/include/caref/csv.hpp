#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace caref {

class CsvError : public std::runtime_error {
 public:
  CsvError(int line, const std::string& what) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Quotes a field when it holds a comma, quote, or line break (quotes doubled).
std::string csv_escape(const std::string& field);

/// One record, LF-terminated.
void write_csv_row(std::ostream& os, std::span<const std::string> fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Reads a whole CSV file (quoted fields supported). Ragged rows raise
/// CsvError naming the 1-based line the record started on.
CsvTable read_csv(const std::filesystem::path& path);

/// Round-trippable decimal rendering (%.17g).
std::string format_double(double x);

/// strtod with full-consumption check; throws std::invalid_argument.
double parse_double(const std::string& s);

}  // namespace caref
