#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairgraph/error.hpp"

namespace fairgraph {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Plain-text `key = value` configuration. `#` starts a comment, blank lines
// are ignored, keys may appear once. Unknown keys are rejected by
// require_keys so typos fail loudly instead of being silently ignored.
class KeyValueConfig {
public:
  static KeyValueConfig from_stream(std::istream& is, std::string source = "<stream>") {
    KeyValueConfig cfg;
    cfg.source_ = std::move(source);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(cfg.source_ + ":" + std::to_string(lineno) +
                          ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(cfg.source_ + ":" + std::to_string(lineno) + ": empty key");
      if (cfg.values_.count(key))
        throw ConfigError(cfg.source_ + ":" + std::to_string(lineno) + ": duplicate key '" +
                          key + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open config file: " + path);
    return from_stream(is, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
      throw ConfigError(source_ + ": missing required key '" + key + "'");
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long get_int(const std::string& key) const {
    const std::string v = get_string(key);
    std::size_t pos = 0;
    long out = 0;
    try {
      out = std::stol(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError(source_ + ": key '" + key + "' is not an integer: '" + v + "'");
    }
    if (pos != v.size())
      throw ConfigError(source_ + ": key '" + key + "' is not an integer: '" + v + "'");
    return out;
  }
  long get_int(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
      out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError(source_ + ": key '" + key + "' is not an unsigned integer: '" + v + "'");
    }
    if (pos != v.size())
      throw ConfigError(source_ + ": key '" + key + "' is not an unsigned integer: '" + v + "'");
    return out;
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
  }

  void require_keys(const std::set<std::string>& allowed,
                    const std::set<std::string>& required) const {
    for (const auto& [key, value] : values_)
      if (!allowed.count(key))
        throw ConfigError(source_ + ": unknown key '" + key + "'");
    for (const auto& key : required)
      if (!values_.count(key))
        throw ConfigError(source_ + ": missing required key '" + key + "'");
  }

  const std::string& source() const { return source_; }
  const std::map<std::string, std::string>& values() const { return values_; }

private:
  double parse_double(const std::string& key, const std::string& v) const {
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError(source_ + ": key '" + key + "' is not a number: '" + v + "'");
    }
    if (pos != v.size())
      throw ConfigError(source_ + ": key '" + key + "' is not a number: '" + v + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
  std::string source_;
};

}  // namespace fairgraph
