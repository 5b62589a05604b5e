#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace caref {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Flat `key = value` configuration, one pair per line, `#` comments.
/// No sections, no nesting. Lookups of missing or malformed values throw
/// ConfigError carrying the offending line (or -1 for missing keys).
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::filesystem::path& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::vector<std::string>& keys() const { return order_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;

  /// Comma-separated lists, e.g. `alphas = 1, 1.5, 2`.
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

 private:
  struct Entry {
    std::string value;
    int line = -1;
  };
  std::map<std::string, Entry> values_;
  std::vector<std::string> order_;
};

}  // namespace caref
