#include "caref/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace caref {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(-1, "cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;

    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(lineno, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(lineno, "line " + std::to_string(lineno) + ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw ConfigError(lineno, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = Entry{value, lineno};
    cfg.order_.push_back(key);
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(-1, "missing config key '" + key + "'");
  return it->second.value;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

namespace {

double parse_double_value(const std::string& value, const std::string& key, int line) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(line, "line " + std::to_string(line) + ": key '" + key +
                                "' is not a number: '" + value + "'");
  }
  return x;
}

std::int64_t parse_int_value(const std::string& value, const std::string& key, int line) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(line, "line " + std::to_string(line) + ": key '" + key +
                                "' is not an integer: '" + value + "'");
  }
  return static_cast<std::int64_t>(x);
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> parts;
  std::string::size_type start = 0;
  for (;;) {
    const auto comma = value.find(',', start);
    parts.push_back(value.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

}  // namespace

double KeyValueConfig::get_double(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(-1, "missing config key '" + key + "'");
  return parse_double_value(it->second.value, key, it->second.line);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(-1, "missing config key '" + key + "'");
  return parse_int_value(it->second.value, key, it->second.line);
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(-1, "missing config key '" + key + "'");
  std::vector<double> out;
  for (const std::string& part : split_commas(it->second.value)) {
    const std::string item = [&] {
      const auto first = part.find_first_not_of(" \t");
      if (first == std::string::npos) return std::string{};
      const auto last = part.find_last_not_of(" \t");
      return part.substr(first, last - first + 1);
    }();
    if (item.empty()) {
      throw ConfigError(it->second.line, "line " + std::to_string(it->second.line) + ": key '" +
                                             key + "' has an empty list element");
    }
    out.push_back(parse_double_value(item, key, it->second.line));
  }
  return out;
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (double x : get_double_list(key)) {
    const auto i = static_cast<std::int64_t>(x);
    if (static_cast<double>(i) != x) {
      const auto it = values_.find(key);
      throw ConfigError(it->second.line, "line " + std::to_string(it->second.line) + ": key '" +
                                             key + "' has a non-integer list element");
    }
    out.push_back(i);
  }
  return out;
}

}  // namespace caref
