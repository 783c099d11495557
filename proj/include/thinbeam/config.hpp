#pragma once

// Line-oriented experiment configuration: `section.key = value`, `#` starts a
// comment, blank lines ignored. Values are kept as trimmed strings and parsed
// on access; lists are comma separated.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "thinbeam/errors.hpp"

namespace thinbeam {

namespace detail {

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool valid_key(const std::string &k) {
  const auto dot = k.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == k.size()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  return true;
}

}  // namespace detail

class Config {
 public:
  static Config parse(std::istream &is, const std::string &origin = "<config>") {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = origin + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'section.key = value'");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (!detail::valid_key(key)) throw ConfigError(where + ": key '" + key + "' is not of the form section.key");
      if (c.kv_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
      c.kv_[key] = value;
    }
    return c;
  }

  static Config parse_string(const std::string &text, const std::string &origin = "<string>") {
    std::istringstream is(text);
    return parse(is, origin);
  }

  static Config load(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  bool has(const std::string &key) const { return kv_.count(key) != 0; }
  void set(const std::string &key, const std::string &value) {
    if (!detail::valid_key(key)) throw ConfigError("key '" + key + "' is not of the form section.key");
    kv_[key] = value;
  }
  const std::map<std::string, std::string> &entries() const { return kv_; }

  std::string get_string(const std::string &key, const std::string &fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string &key, double fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : to_double(key, it->second);
  }

  long long get_int(const std::string &key, long long fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    char *end = nullptr;
    const long long v = std::strtoll(it->second.c_str(), &end, 10);
    if (it->second.empty() || *end != '\0') throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
    return v;
  }

  bool get_bool(const std::string &key, bool fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
  }

  std::vector<double> get_list(const std::string &key, const std::vector<double> &fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, detail::trim(item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
  }

  /// Sorted `key=value` lines; independent of file order, comments and spacing.
  std::string canonical() const {
    std::string s;
    for (const auto &[k, v] : kv_) s += k + "=" + v + "\n";
    return s;
  }

  /// 64-bit FNV-1a of canonical().
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

 private:
  static double to_double(const std::string &key, const std::string &v) {
    char *end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace thinbeam
